#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <thread>
#include <vector>

#include "alscd/cloud_io.hpp"
#include "alscd/grid.hpp"
#include "alscd/tensor.hpp"

namespace alscd {

inline constexpr double kNoDataZ = -9999.0;

/// Per-cell surface attributes. Invalid cells hold kNoDataZ in z and 0 in
/// every other channel.
struct SurfaceRaster {
  GridSpec spec;
  Grid<double> z;
  Grid<std::uint16_t> intensity;
  Grid<std::uint8_t> num_returns;
  Grid<std::uint16_t> r, g, b;
  Mask valid;

  SurfaceRaster() = default;
  explicit SurfaceRaster(const GridSpec& s)
      : spec(s), z(s, kNoDataZ), intensity(s), num_returns(s), r(s), g(s), b(s), valid(s) {}

  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.data.begin(), valid.data.end(), std::uint8_t{1}));
  }

  void copy_cell(std::size_t dst, const SurfaceRaster& from, std::size_t src) {
    z[dst] = from.z[src];
    intensity[dst] = from.intensity[src];
    num_returns[dst] = from.num_returns[src];
    r[dst] = from.r[src];
    g[dst] = from.g[src];
    b[dst] = from.b[src];
    valid[dst] = from.valid[src];
  }

  friend bool operator==(const SurfaceRaster&, const SurfaceRaster&) = default;
};

namespace detail {

inline constexpr std::int64_t kNoPoint = -1;

// lexicographic max of (z, -index)
inline bool beats(const std::vector<PointRecord>& pts, std::int64_t cand, std::int64_t cur) {
  if (cur == kNoPoint) return true;
  const double zc = pts[static_cast<std::size_t>(cand)].z, zk = pts[static_cast<std::size_t>(cur)].z;
  return zc > zk || (zc == zk && cand < cur);
}

inline void scan_points(const std::vector<PointRecord>& pts, const GridSpec& spec, std::size_t begin, std::size_t end,
                        std::vector<std::int64_t>& best) {
  for (std::size_t i = begin; i < end; ++i) {
    const auto cell = spec.cell_of(pts[i].x, pts[i].y);
    if (!cell) continue;
    std::int64_t& slot = best[spec.index(cell->first, cell->second)];
    if (beats(pts, static_cast<std::int64_t>(i), slot)) slot = static_cast<std::int64_t>(i);
  }
}

}  // namespace detail

/// Max-elevation projection: each cell takes every attribute of its highest
/// point; equal heights go to the lowest point index. Points outside the grid
/// are ignored. With workers > 1 the points are split into contiguous ranges
/// and the per-worker winners are reduced with the same rule, so the result
/// does not depend on the worker count.
inline SurfaceRaster surface_extract(const PointCloud& cloud, const GridSpec& spec, unsigned workers = 1) {
  spec.validate();
  const auto& pts = cloud.points();
  std::vector<std::int64_t> best(spec.cells(), detail::kNoPoint);
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, pts.size() / 4096))));
  if (workers == 1) {
    detail::scan_points(pts, spec, 0, pts.size(), best);
  } else {
    std::vector<std::vector<std::int64_t>> partial(workers, std::vector<std::int64_t>(spec.cells(), detail::kNoPoint));
    std::vector<std::thread> pool;
    const std::size_t chunk = (pts.size() + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t b = std::min(pts.size(), w * chunk), e = std::min(pts.size(), b + chunk);
      pool.emplace_back([&, w, b, e] { detail::scan_points(pts, spec, b, e, partial[w]); });
    }
    for (auto& t : pool) t.join();
    for (const auto& part : partial)
      for (std::size_t c = 0; c < best.size(); ++c)
        if (part[c] != detail::kNoPoint && detail::beats(pts, part[c], best[c])) best[c] = part[c];
  }

  SurfaceRaster out(spec);
  for (std::size_t c = 0; c < best.size(); ++c) {
    if (best[c] == detail::kNoPoint) continue;
    const PointRecord& p = pts[static_cast<std::size_t>(best[c])];
    out.z[c] = p.z;
    out.intensity[c] = p.intensity;
    out.num_returns[c] = p.num_returns;
    out.r[c] = p.r;
    out.g[c] = p.g;
    out.b[c] = p.b;
    out.valid[c] = 1;
  }
  return out;
}

/// Grid covering a cloud's footprint, snapped outward to multiples of
/// cell_size so that two epochs over the same area land on the same lattice.
inline GridSpec grid_for_cloud(const PointCloud& cloud, double cell_size) {
  if (cloud.empty()) throw Error(Errc::NoValidData, "cannot derive a grid from an empty cloud");
  const Bounds& b = *cloud.bounds();
  GridSpec s;
  s.cell_size = cell_size;
  s.origin_x = std::floor(b.min_x / cell_size) * cell_size;
  s.origin_y = std::floor(b.min_y / cell_size) * cell_size;
  s.width = static_cast<std::size_t>(std::floor((b.max_x - s.origin_x) / cell_size)) + 1;
  s.height = static_cast<std::size_t>(std::floor((b.max_y - s.origin_y) / cell_size)) + 1;
  s.crs_tag = cloud.crs_tag();
  s.validate();
  return s;
}

/// Nearest-neighbor hole filling, single pass against the input validity
/// mask. An invalid cell takes every channel of the nearest valid cell within
/// Euclidean distance max_radius (in cells); ties go to the smallest
/// row-major index.
inline SurfaceRaster fill_holes(const SurfaceRaster& in, std::size_t max_radius) {
  SurfaceRaster out = in;
  if (max_radius == 0) return out;
  const auto R = static_cast<std::ptrdiff_t>(max_radius);
  struct Offset {
    std::ptrdiff_t dr, dc, d2;
  };
  std::vector<Offset> offsets;
  for (std::ptrdiff_t dr = -R; dr <= R; ++dr)
    for (std::ptrdiff_t dc = -R; dc <= R; ++dc)
      if ((dr || dc) && dr * dr + dc * dc <= R * R) offsets.push_back({dr, dc, dr * dr + dc * dc});
  // for in-bounds candidates (dr, dc) order is row-major index order
  std::stable_sort(offsets.begin(), offsets.end(), [](const Offset& a, const Offset& b) {
    return a.d2 != b.d2 ? a.d2 < b.d2 : (a.dr != b.dr ? a.dr < b.dr : a.dc < b.dc);
  });
  const auto W = static_cast<std::ptrdiff_t>(in.spec.width), H = static_cast<std::ptrdiff_t>(in.spec.height);
  for (std::ptrdiff_t row = 0; row < H; ++row)
    for (std::ptrdiff_t col = 0; col < W; ++col) {
      const auto idx = static_cast<std::size_t>(row * W + col);
      if (in.valid[idx]) continue;
      for (const Offset& o : offsets) {
        const std::ptrdiff_t rr = row + o.dr, cc = col + o.dc;
        if (rr < 0 || cc < 0 || rr >= H || cc >= W) continue;
        const auto src = static_cast<std::size_t>(rr * W + cc);
        if (in.valid[src]) {
          out.copy_cell(idx, in, src);
          break;
        }
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// normalization

/// Per-channel min/max in channel units.
struct NormStats {
  std::vector<double> min, max;

  std::size_t channels() const noexcept { return min.size(); }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

namespace detail {

inline std::array<double, 3> zin_values(const SurfaceRaster& r, std::size_t i) {
  return {r.z[i], static_cast<double>(r.intensity[i]), static_cast<double>(r.num_returns[i])};
}

}  // namespace detail

/// Statistics of the (Z, I, N) channels over valid cells.
inline NormStats zin_stats(const SurfaceRaster& raster) {
  NormStats s{std::vector<double>(3, std::numeric_limits<double>::infinity()),
              std::vector<double>(3, -std::numeric_limits<double>::infinity())};
  bool any = false;
  for (std::size_t i = 0; i < raster.valid.size(); ++i) {
    if (!raster.valid[i]) continue;
    any = true;
    const auto v = detail::zin_values(raster, i);
    for (std::size_t c = 0; c < 3; ++c) {
      s.min[c] = std::min(s.min[c], v[c]);
      s.max[c] = std::max(s.max[c], v[c]);
    }
  }
  if (!any) throw Error(Errc::NoValidData, "raster has no valid cells");
  return s;
}

/// Union of several statistics (elementwise min of mins, max of maxes).
inline NormStats merge_stats(const NormStats& a, const NormStats& b) {
  require_shape(a.channels() == b.channels(), "merge_stats: channel count");
  NormStats s = a;
  for (std::size_t c = 0; c < a.channels(); ++c) {
    s.min[c] = std::min(a.min[c], b.min[c]);
    s.max[c] = std::max(a.max[c], b.max[c]);
  }
  return s;
}

inline double normalize_value(double v, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

inline double denormalize_value(double t, double lo, double hi) { return lo + t * (hi - lo); }

/// 3 x H x W tensor of (Z, I, N) mapped through `stats`; invalid cells are 0.
inline Tensor<double> normalize_zin(const SurfaceRaster& raster, const NormStats& stats) {
  require_shape(stats.channels() == 3, "normalize_zin: stats must have 3 channels");
  const std::size_t H = raster.spec.height, W = raster.spec.width, P = H * W;
  Tensor<double> t({3, H, W});
  for (std::size_t i = 0; i < P; ++i) {
    if (!raster.valid[i]) continue;
    const auto v = detail::zin_values(raster, i);
    for (std::size_t c = 0; c < 3; ++c) t[c * P + i] = normalize_value(v[c], stats.min[c], stats.max[c]);
  }
  return t;
}

struct NormalizedZin {
  Tensor<double> zin;
  NormStats stats;
};

/// Min-max normalization with statistics taken from this raster.
inline NormalizedZin normalize_zin(const SurfaceRaster& raster) {
  NormStats s = zin_stats(raster);
  Tensor<double> t = normalize_zin(raster, s);
  return {std::move(t), std::move(s)};
}

/// 3 x H x W tensor of r, g, b divided by 65535; invalid cells are 0.
inline Tensor<double> extract_rgb(const SurfaceRaster& raster) {
  const std::size_t H = raster.spec.height, W = raster.spec.width, P = H * W;
  Tensor<double> t({3, H, W});
  for (std::size_t i = 0; i < P; ++i) {
    if (!raster.valid[i]) continue;
    t[i] = raster.r[i] / 65535.0;
    t[P + i] = raster.g[i] / 65535.0;
    t[2 * P + i] = raster.b[i] / 65535.0;
  }
  return t;
}

}  // namespace alscd
