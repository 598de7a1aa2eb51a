#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "alscd/change_map.hpp"
#include "alscd/config.hpp"
#include "alscd/error.hpp"
#include "alscd/grid.hpp"
#include "alscd/morphology.hpp"
#include "alscd/raster.hpp"

namespace alscd {

/// One epoch's two-channel change input: building mask and the raw surface
/// z on building cells (0 elsewhere). `valid` carries the raster's
/// observation mask so differencing can flag NoData.
struct ChangeInput {
  GridSpec spec;
  Mask building;
  Grid<double> z_masked;
  Mask valid;
};

inline ChangeInput build_change_input(const Mask& building, const SurfaceRaster& surface) {
  require_shape(building.same_shape(surface.spec), "build_change_input: mask does not match the raster grid");
  ChangeInput in{surface.spec, Mask(surface.spec), Grid<double>(surface.spec), surface.valid};
  for (std::size_t i = 0; i < surface.spec.cells(); ++i) {
    in.building[i] = building[i] ? 1 : 0;
    if (in.building[i]) in.z_masked[i] = surface.z[i];
  }
  return in;
}

/// Accepts anything with `spec` and `building` members (a SegMap).
template <class Seg>
ChangeInput build_change_input(const Seg& seg, const SurfaceRaster& surface) {
  require_same_spec(seg.spec, surface.spec, "build_change_input");
  return build_change_input(seg.building, surface);
}

struct DiffChannels {
  GridSpec spec;
  Grid<std::int8_t> footprint;  // building2 - building1
  Grid<double> z_diff;          // z2 - z1 where both are building, else 0
  Mask shared;                  // building in both epochs
  Mask nodata;                  // invalid in either epoch
};

inline DiffChannels diff_channels(const ChangeInput& t1, const ChangeInput& t2) {
  require_same_spec(t1.spec, t2.spec, "diff_channels");
  const GridSpec& s = t1.spec;
  DiffChannels d{s, Grid<std::int8_t>(s), Grid<double>(s), Mask(s), Mask(s)};
  for (std::size_t i = 0; i < s.cells(); ++i) {
    d.nodata[i] = (!t1.valid[i] || !t2.valid[i]) ? 1 : 0;
    d.footprint[i] = static_cast<std::int8_t>(static_cast<int>(t2.building[i]) - static_cast<int>(t1.building[i]));
    d.shared[i] = t1.building[i] && t2.building[i];
    if (d.shared[i]) d.z_diff[i] = t2.z_masked[i] - t1.z_masked[i];
  }
  return d;
}

struct ChangeParams {
  std::size_t kernel = 3;      // structuring element side
  double z_threshold = 2.5;    // m
  double min_blob_area = 20.0;  // m^2
  int connectivity = 8;

  void validate() const {
    if (kernel == 0 || kernel % 2 == 0) throw Error(Errc::BadConfig, "change kernel must be odd, got " + std::to_string(kernel));
    if (!(z_threshold > 0)) throw Error(Errc::BadConfig, "z_threshold must be > 0");
    if (!(min_blob_area >= 0)) throw Error(Errc::BadConfig, "min_blob_area must be >= 0");
    if (connectivity != 4 && connectivity != 8) throw Error(Errc::BadConfig, "connectivity must be 4 or 8");
  }
};

namespace detail {

inline std::size_t min_cells_for(const ChangeParams& p, double cell_size) {
  return static_cast<std::size_t>(std::ceil(p.min_blob_area / (cell_size * cell_size) - 1e-9));
}

}  // namespace detail

/// Four-class change map.
///
/// Candidates: NewlyBuilt where footprint = +1, Demolished where -1, Taller
/// and Shorter on shared building cells with z_diff beyond +-z_threshold.
/// Each candidate mask is closed, then opened, then clipped back to the
/// cells where its class is admissible (the footprint sign for the first
/// two, shared building for the elevation classes) and to observed cells.
/// Taller/Shorter overlap left by morphology goes to the sign of z_diff
/// (dropped when zero). Blobs under min_blob_area are removed last.
///
/// Magnitude: signed z_diff on elevation cells. Cells that morphology added
/// take the mean z_diff of their blob's original candidate cells. Footprint
/// classes carry 0 since z_diff is only defined on shared building.
inline ChangeMap classify_changes(const DiffChannels& d, const ChangeParams& params = {}) {
  params.validate();
  const GridSpec& s = d.spec;
  const std::size_t n = s.cells();
  std::array<Mask, 4> cand;
  for (auto& m : cand) m = Mask(s);
  for (std::size_t i = 0; i < n; ++i) {
    if (d.nodata[i]) continue;
    cand[0][i] = d.footprint[i] > 0;
    cand[1][i] = d.footprint[i] < 0;
    cand[2][i] = d.shared[i] && d.z_diff[i] > params.z_threshold;
    cand[3][i] = d.shared[i] && d.z_diff[i] < -params.z_threshold;
  }
  std::array<Mask, 4> refined;
  for (std::size_t c = 0; c < 4; ++c) {
    refined[c] = open(close(cand[c], params.kernel), params.kernel);
    for (std::size_t i = 0; i < n; ++i) {
      const bool admissible = !d.nodata[i] && (c == 0   ? d.footprint[i] > 0
                                               : c == 1 ? d.footprint[i] < 0
                                                        : d.shared[i] != 0);
      if (!admissible) refined[c][i] = 0;
    }
  }
  ChangeMap map(s);
  for (std::size_t i = 0; i < n; ++i) {
    if (d.nodata[i]) {
      map.label[i] = label_value(ChangeLabel::NoData);
    } else if (refined[0][i]) {
      map.label[i] = label_value(ChangeLabel::NewlyBuilt);
    } else if (refined[1][i]) {
      map.label[i] = label_value(ChangeLabel::Demolished);
    } else if (refined[2][i] && refined[3][i]) {
      if (d.z_diff[i] > 0) map.label[i] = label_value(ChangeLabel::Taller);
      else if (d.z_diff[i] < 0) map.label[i] = label_value(ChangeLabel::Shorter);
    } else if (refined[2][i]) {
      map.label[i] = label_value(ChangeLabel::Taller);
    } else if (refined[3][i]) {
      map.label[i] = label_value(ChangeLabel::Shorter);
    }
  }

  // elevation magnitudes, filling morphology-added cells with the blob mean
  for (std::size_t c = 2; c < 4; ++c) {
    const std::uint8_t v = label_value(kChangeClasses[c]);
    const Components comp =
        connected_components(s.width, s.height, [&](std::size_t i) { return map.label[i] == v; }, params.connectivity);
    std::vector<double> sum(static_cast<std::size_t>(comp.count) + 1, 0.0);
    std::vector<std::size_t> raw(sum.size(), 0);
    for (std::size_t i = 0; i < n; ++i)
      if (comp.label[i] && cand[c][i]) {
        sum[static_cast<std::size_t>(comp.label[i])] += d.z_diff[i];
        ++raw[static_cast<std::size_t>(comp.label[i])];
      }
    for (std::size_t i = 0; i < n; ++i) {
      const auto b = static_cast<std::size_t>(comp.label[i]);
      if (!b) continue;
      if (raw[b] == 0) {
        map.label[i] = label_value(ChangeLabel::NoChange);
      } else {
        map.magnitude[i] = cand[c][i] ? d.z_diff[i] : sum[b] / static_cast<double>(raw[b]);
      }
    }
  }

  const std::size_t min_cells = detail::min_cells_for(params, s.cell_size);
  for (ChangeLabel cls : kChangeClasses) {
    const std::uint8_t v = label_value(cls);
    const Components comp =
        connected_components(s.width, s.height, [&](std::size_t i) { return map.label[i] == v; }, params.connectivity);
    for (std::size_t i = 0; i < n; ++i)
      if (comp.label[i] && comp.sizes[static_cast<std::size_t>(comp.label[i] - 1)] < min_cells) {
        map.label[i] = label_value(ChangeLabel::NoChange);
        map.magnitude[i] = 0;
      }
  }
  return map;
}

/// Swaps NewlyBuilt with Demolished and Taller with Shorter, negating the
/// magnitude: the map the reversed epoch order should produce.
inline ChangeMap reversed(const ChangeMap& m) {
  ChangeMap out = m;
  for (std::size_t i = 0; i < m.label.size(); ++i) {
    switch (m.at(i)) {
      case ChangeLabel::NewlyBuilt: out.label[i] = label_value(ChangeLabel::Demolished); break;
      case ChangeLabel::Demolished: out.label[i] = label_value(ChangeLabel::NewlyBuilt); break;
      case ChangeLabel::Taller: out.label[i] = label_value(ChangeLabel::Shorter); break;
      case ChangeLabel::Shorter: out.label[i] = label_value(ChangeLabel::Taller); break;
      default: break;
    }
    out.magnitude[i] = -m.magnitude[i] + 0.0;  // +0.0 keeps zeros unsigned
  }
  return out;
}

// ---------------------------------------------------------------------------
// blobs

struct ChangeBlob {
  ChangeLabel label = ChangeLabel::NoChange;
  std::size_t cells = 0;
  double area_m2 = 0;
  double mean_dz = 0;
  std::size_t col0 = 0, row0 = 0, col1 = 0, row1 = 0;  // inclusive cell bbox
  double centroid_x = 0, centroid_y = 0;              // world coordinates
  std::string note;

  friend bool operator==(const ChangeBlob&, const ChangeBlob&) = default;
};

/// 8-connected blobs per change class in class order, each class in
/// row-major discovery order.
///
/// With `shared_building` given, a Taller blob covering under half of the
/// shared-building component(s) it sits on is annotated for review: a
/// partial roof rise is often an added shed or ongoing construction rather
/// than a new storey.
inline std::vector<ChangeBlob> blob_stats(const ChangeMap& map, const Mask* shared_building = nullptr) {
  const GridSpec& s = map.spec;
  Components roofs;
  if (shared_building) {
    require_shape(shared_building->same_shape(s), "blob_stats: shared building mask shape");
    roofs = connected_components(*shared_building);
  }
  std::vector<ChangeBlob> out;
  for (ChangeLabel cls : kChangeClasses) {
    const std::uint8_t v = label_value(cls);
    const Components comp = connected_components(s.width, s.height, [&](std::size_t i) { return map.label[i] == v; });
    const std::size_t first = out.size();
    for (std::int32_t b = 0; b < comp.count; ++b) {
      ChangeBlob blob;
      blob.label = cls;
      blob.col0 = s.width;
      blob.row0 = s.height;
      out.push_back(blob);
    }
    std::vector<double> sx(static_cast<std::size_t>(comp.count)), sy(sx.size()), sz(sx.size());
    std::vector<std::vector<std::int32_t>> touched(sx.size());
    for (std::size_t row = 0; row < s.height; ++row)
      for (std::size_t col = 0; col < s.width; ++col) {
        const std::size_t i = s.index(col, row);
        if (!comp.label[i]) continue;
        const auto b = static_cast<std::size_t>(comp.label[i] - 1);
        ChangeBlob& blob = out[first + b];
        ++blob.cells;
        blob.col0 = std::min(blob.col0, col);
        blob.row0 = std::min(blob.row0, row);
        blob.col1 = std::max(blob.col1, col);
        blob.row1 = std::max(blob.row1, row);
        sx[b] += s.center_x(col);
        sy[b] += s.center_y(row);
        sz[b] += map.magnitude[i];
        if (shared_building && roofs.label[i]) touched[b].push_back(roofs.label[i]);
      }
    for (std::size_t b = 0; b < sx.size(); ++b) {
      ChangeBlob& blob = out[first + b];
      const double k = static_cast<double>(blob.cells);
      blob.area_m2 = k * s.cell_size * s.cell_size;
      blob.mean_dz = sz[b] / k;
      blob.centroid_x = sx[b] / k;
      blob.centroid_y = sy[b] / k;
      if (cls == ChangeLabel::Taller && shared_building && !touched[b].empty()) {
        std::sort(touched[b].begin(), touched[b].end());
        touched[b].erase(std::unique(touched[b].begin(), touched[b].end()), touched[b].end());
        std::size_t roof_cells = 0;
        for (auto r : touched[b]) roof_cells += roofs.sizes[static_cast<std::size_t>(r - 1)];
        if (2 * blob.cells < roof_cells) blob.note = "review: partial roof rise (shed or ongoing construction?)";
      }
    }
  }
  return out;
}

/// label,area_m2,mean_dz_m,centroid_x,centroid_y,cells,note
inline std::string blob_table(const std::vector<ChangeBlob>& blobs) {
  std::string out = "label,area_m2,mean_dz_m,centroid_x,centroid_y,cells,note\n";
  for (const auto& b : blobs) {
    out += std::string(label_name(b.label)) + "," + format_double(b.area_m2) + "," + format_double(b.mean_dz) + "," +
           format_double(b.centroid_x) + "," + format_double(b.centroid_y) + "," + std::to_string(b.cells) + "," +
           b.note + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// overlay

/// 8-bit RGB, row 0 at the top (north).
struct RgbImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}
  std::array<std::uint8_t, 3> at(std::size_t x, std::size_t y) const {
    const std::size_t o = (y * width + x) * 3;
    return {pixels[o], pixels[o + 1], pixels[o + 2]};
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

inline constexpr std::array<std::uint8_t, 3> kBuildingBlue{0, 0, 255};
inline constexpr std::array<std::uint8_t, 3> kFootprintRed{255, 0, 0};
inline constexpr std::array<std::uint8_t, 3> kElevationOffWhite{240, 240, 230};

/// Later-epoch buildings in blue, footprint changes red, elevation changes
/// off-white, everything else black. Change colors win over blue.
inline RgbImage overlay_render(const ChangeMap& map, const Mask& footprint_t2) {
  require_shape(footprint_t2.same_shape(map.spec), "overlay_render: footprint does not match the change map grid");
  const GridSpec& s = map.spec;
  RgbImage img(s.width, s.height);
  for (std::size_t row = 0; row < s.height; ++row)
    for (std::size_t col = 0; col < s.width; ++col) {
      const std::size_t i = s.index(col, row);
      const ChangeLabel l = map.at(i);
      const std::array<std::uint8_t, 3>* c = nullptr;
      if (l == ChangeLabel::NewlyBuilt || l == ChangeLabel::Demolished) c = &kFootprintRed;
      else if (l == ChangeLabel::Taller || l == ChangeLabel::Shorter) c = &kElevationOffWhite;
      else if (footprint_t2[i]) c = &kBuildingBlue;
      if (!c) continue;
      const std::size_t o = ((s.height - 1 - row) * s.width + col) * 3;
      img.pixels[o] = (*c)[0];
      img.pixels[o + 1] = (*c)[1];
      img.pixels[o + 2] = (*c)[2];
    }
  return img;
}

}  // namespace alscd
