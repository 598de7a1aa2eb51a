#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "alscd/change_map.hpp"
#include "alscd/cloud_io.hpp"
#include "alscd/grid.hpp"

namespace alscd::synth {

struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double area() const noexcept { return (x1 - x0) * (y1 - y0); }
  bool contains(double x, double y) const noexcept { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  /// True when the rectangles come closer than `gap`.
  bool near(const Rect& o, double gap = 0.0) const noexcept {
    return x0 < o.x1 + gap && o.x0 < x1 + gap && y0 < o.y1 + gap && o.y0 < y1 + gap;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Flat-roofed box. Footprint coordinates are relative to the scene origin.
struct BuildingSpec {
  Rect footprint;
  double height = 10.0;
  std::array<std::uint16_t, 3> roof_rgb{40000, 20000, 15000};
  int id = 0;
  friend bool operator==(const BuildingSpec&, const BuildingSpec&) = default;
};

struct Tree {
  double cx = 0, cy = 0, radius = 3, height = 8;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct ValueRange {
  double lo, hi;
};

/// Scene and sensor parameters. Material intensity ranges are arbitrary
/// constants; only their separation matters.
struct SceneConfig {
  double origin_x = 674000.0;
  double origin_y = 6580000.0;
  double extent_x = 128.0;
  double extent_y = 192.0;
  double ground_z = 20.0;
  double point_density = 12.0;
  double dropout_rate = 0.02;
  double z_noise_sigma = 0.05;
  std::size_t n_buildings = 8;
  std::size_t tree_count = 10;
  std::uint64_t seed = 42;

  double cell_size = 0.5;
  double min_building_area = 60.0;
  double max_building_area = 1700.0;
  double min_side = 6.0;
  double max_side = 40.0;
  double min_height = 6.0;
  double max_height = 30.0;
  double building_gap = 4.0;
  double footprint_snap = 1.0;
  ValueRange tree_radius{2.0, 5.0};
  ValueRange tree_height{4.0, 14.0};
  double roof_holes_per_building = 1.0;
  std::size_t max_hole_cells = 3;

  ValueRange ground_intensity{20000, 40000};
  ValueRange roof_intensity{40000, 60000};
  ValueRange canopy_intensity{5000, 20000};
  double color_noise = 6.0 * 257.0;

  std::string crs_tag = "EPSG:3006";

  void validate() const {
    auto fail = [](const std::string& key, const std::string& why) { throw Error(Errc::BadConfig, key + ": " + why); };
    if (!(extent_x > 0)) fail("extent_x", "must be > 0");
    if (!(extent_y > 0)) fail("extent_y", "must be > 0");
    if (!(point_density > 0)) fail("point_density", "must be > 0");
    if (!(dropout_rate >= 0 && dropout_rate < 1)) fail("dropout_rate", "must be in [0, 1)");
    if (!(z_noise_sigma >= 0)) fail("z_noise_sigma", "must be >= 0");
    if (!(cell_size > 0)) fail("cell_size", "must be > 0");
    if (!(min_side > 0 && max_side >= min_side)) fail("min_side", "need 0 < min_side <= max_side");
    if (!(min_height > 0 && max_height >= min_height)) fail("min_height", "need 0 < min_height <= max_height");
    if (!(max_building_area >= min_building_area)) fail("max_building_area", "must be >= min_building_area");
    if (!(roof_holes_per_building >= 0)) fail("roof_holes_per_building", "must be >= 0");
  }
};

/// Grid on which truth masks and change maps are defined.
inline GridSpec scene_grid(const SceneConfig& c) {
  GridSpec s;
  s.origin_x = c.origin_x;
  s.origin_y = c.origin_y;
  s.cell_size = c.cell_size;
  s.width = static_cast<std::size_t>(std::llround(c.extent_x / c.cell_size));
  s.height = static_cast<std::size_t>(std::llround(c.extent_y / c.cell_size));
  s.crs_tag = c.crs_tag;
  s.validate();
  return s;
}

struct SceneModel {
  SceneConfig config;
  std::vector<BuildingSpec> buildings;
  std::vector<Tree> trees;

  const BuildingSpec* building_at(double lx, double ly) const {
    for (const auto& b : buildings)
      if (b.footprint.contains(lx, ly)) return &b;
    return nullptr;
  }
  const BuildingSpec* find(int id) const {
    for (const auto& b : buildings)
      if (b.id == id) return &b;
    return nullptr;
  }
  int next_id() const {
    int m = 0;
    for (const auto& b : buildings) m = std::max(m, b.id);
    return m + 1;
  }
  bool fits(const Rect& r, int ignore_id = -1) const {
    const SceneConfig& c = config;
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > c.extent_x || r.y1 > c.extent_y) return false;
    for (const auto& b : buildings)
      if (b.id != ignore_id && b.footprint.near(r, c.building_gap)) return false;
    return true;
  }

  friend bool operator==(const SceneModel& a, const SceneModel& b) {
    return a.buildings == b.buildings && a.trees == b.trees;
  }
};

namespace detail {

inline double snap(double v, double step) { return step > 0 ? std::round(v / step) * step : v; }

template <class Rng>
std::optional<Rect> random_footprint(const SceneModel& scene, Rng& rng, std::size_t attempts) {
  const SceneConfig& c = scene.config;
  std::uniform_real_distribution<double> side(c.min_side, c.max_side);
  for (std::size_t a = 0; a < attempts; ++a) {
    const double w = detail::snap(side(rng), c.footprint_snap), d = detail::snap(side(rng), c.footprint_snap);
    if (w * d < c.min_building_area || w * d > c.max_building_area) continue;
    if (w + 2 * c.building_gap > c.extent_x || d + 2 * c.building_gap > c.extent_y) continue;
    std::uniform_real_distribution<double> ux(c.building_gap, c.extent_x - c.building_gap - w),
        uy(c.building_gap, c.extent_y - c.building_gap - d);
    const double x0 = detail::snap(ux(rng), c.footprint_snap), y0 = detail::snap(uy(rng), c.footprint_snap);
    Rect r{x0, y0, x0 + w, y0 + d};
    if (scene.fits(r)) return r;
  }
  return std::nullopt;
}

template <class Rng>
BuildingSpec random_building(const SceneConfig& c, const Rect& r, int id, Rng& rng) {
  std::uniform_real_distribution<double> h(c.min_height, c.max_height);
  // tile red, concrete gray, dark sheet metal
  static constexpr std::array<std::array<int, 3>, 3> palette{{{150, 60, 45}, {150, 150, 145}, {60, 62, 70}}};
  std::uniform_int_distribution<std::size_t> pick(0, palette.size() - 1);
  const auto& base = palette[pick(rng)];
  BuildingSpec b;
  b.footprint = r;
  b.height = std::round(h(rng) * 10.0) / 10.0;
  for (std::size_t i = 0; i < 3; ++i) b.roof_rgb[i] = static_cast<std::uint16_t>(base[i] * 257);
  b.id = id;
  return b;
}

}  // namespace detail

/// Seed-deterministic scene: non-overlapping buildings (kept building_gap
/// apart) plus tree disks whose centers avoid roofs but whose crowns may
/// overhang building edges.
inline SceneModel build_scene(const SceneConfig& config) {
  config.validate();
  SceneModel scene;
  scene.config = config;
  std::mt19937_64 rng(config.seed);
  for (std::size_t i = 0; i < config.n_buildings; ++i) {
    auto r = detail::random_footprint(scene, rng, 2000);
    if (!r)
      throw Error(Errc::PlacementFailure, "could not place building " + std::to_string(i + 1) + " of " +
                                              std::to_string(config.n_buildings));
    scene.buildings.push_back(detail::random_building(config, *r, static_cast<int>(i + 1), rng));
  }
  std::uniform_real_distribution<double> ux(0, config.extent_x), uy(0, config.extent_y);
  std::uniform_real_distribution<double> rad(config.tree_radius.lo, config.tree_radius.hi),
      ht(config.tree_height.lo, config.tree_height.hi);
  for (std::size_t i = 0, attempts = 0; i < config.tree_count && attempts < 100 * (config.tree_count + 1); ++attempts) {
    Tree t{ux(rng), uy(rng), rad(rng), ht(rng)};
    if (scene.building_at(t.cx, t.cy)) continue;
    scene.trees.push_back(t);
    ++i;
  }
  return scene;
}

enum class EditKind { AddBuilding, RemoveBuilding, RaiseBuilding, LowerBuilding };

/// One scripted change between epochs.
struct Edit {
  EditKind kind;
  int target = 0;     // building id for Remove/Raise/Lower
  double dz = 0.0;    // meters, > 0, for Raise/Lower
  BuildingSpec building;  // for Add; id <= 0 means "assign the next free id"

  static Edit add(BuildingSpec b) { return {EditKind::AddBuilding, 0, 0.0, std::move(b)}; }
  static Edit remove(int id) { return {EditKind::RemoveBuilding, id, 0.0, {}}; }
  static Edit raise(int id, double dz) { return {EditKind::RaiseBuilding, id, dz, {}}; }
  static Edit lower(int id, double dz) { return {EditKind::LowerBuilding, id, dz, {}}; }
};

inline std::string_view edit_kind_name(EditKind k) {
  switch (k) {
    case EditKind::AddBuilding: return "add";
    case EditKind::RemoveBuilding: return "remove";
    case EditKind::RaiseBuilding: return "raise";
    case EditKind::LowerBuilding: return "lower";
  }
  return "?";
}

/// Building masks: a cell is building when its center lies in a footprint.
inline Mask building_mask(const SceneModel& scene, const GridSpec& grid) {
  Mask m(grid);
  for (std::size_t row = 0; row < grid.height; ++row)
    for (std::size_t col = 0; col < grid.width; ++col) {
      const double lx = grid.center_x(col) - scene.config.origin_x, ly = grid.center_y(row) - scene.config.origin_y;
      m(col, row) = scene.building_at(lx, ly) ? 1 : 0;
    }
  return m;
}

/// Truth labels from the true roofs of both epochs: building only in the
/// second epoch is NewlyBuilt (+height), only in the first is Demolished
/// (-height); building in both with |dz| > z_threshold is Taller/Shorter
/// with magnitude dz.
inline ChangeMap truth_change(const SceneModel& before, const SceneModel& after, const GridSpec& grid,
                              double z_threshold = 0.0) {
  ChangeMap map(grid);
  for (std::size_t row = 0; row < grid.height; ++row)
    for (std::size_t col = 0; col < grid.width; ++col) {
      const double lx = grid.center_x(col) - before.config.origin_x, ly = grid.center_y(row) - before.config.origin_y;
      const BuildingSpec* b1 = before.building_at(lx, ly);
      const BuildingSpec* b2 = after.building_at(lx, ly);
      const std::size_t i = grid.index(col, row);
      if (!b1 && b2) {
        map.label[i] = label_value(ChangeLabel::NewlyBuilt);
        map.magnitude[i] = b2->height;
      } else if (b1 && !b2) {
        map.label[i] = label_value(ChangeLabel::Demolished);
        map.magnitude[i] = -b1->height;
      } else if (b1 && b2) {
        const double dz = b2->height - b1->height;
        if (dz > z_threshold) {
          map.label[i] = label_value(ChangeLabel::Taller);
          map.magnitude[i] = dz;
        } else if (dz < -z_threshold) {
          map.label[i] = label_value(ChangeLabel::Shorter);
          map.magnitude[i] = dz;
        }
      }
    }
  return map;
}

struct EditResult {
  SceneModel scene;
  ChangeMap truth;
};

/// Applies edits in order and labels the truth change on scene_grid(config).
inline EditResult apply_edits(const SceneModel& scene, const std::vector<Edit>& edits, double z_threshold = 0.0) {
  SceneModel out = scene;
  auto find_mut = [&](int id) -> BuildingSpec& {
    for (auto& b : out.buildings)
      if (b.id == id) return b;
    throw Error(Errc::UnknownTarget, "no building with id " + std::to_string(id));
  };
  for (const Edit& e : edits) {
    switch (e.kind) {
      case EditKind::AddBuilding: {
        BuildingSpec b = e.building;
        if (b.id <= 0) b.id = out.next_id();
        if (out.find(b.id)) throw Error(Errc::OverlapError, "building id " + std::to_string(b.id) + " already exists");
        if (!(b.height > 0)) throw Error(Errc::RangeError, "added building height must be > 0");
        for (const auto& o : out.buildings)
          if (o.footprint.near(b.footprint))
            throw Error(Errc::OverlapError, "new footprint overlaps building " + std::to_string(o.id));
        out.buildings.push_back(b);
        break;
      }
      case EditKind::RemoveBuilding: {
        find_mut(e.target);
        std::erase_if(out.buildings, [&](const BuildingSpec& b) { return b.id == e.target; });
        break;
      }
      case EditKind::RaiseBuilding:
      case EditKind::LowerBuilding: {
        if (!(e.dz > 0)) throw Error(Errc::RangeError, "raise/lower dz must be > 0");
        BuildingSpec& b = find_mut(e.target);
        const double h = b.height + (e.kind == EditKind::RaiseBuilding ? e.dz : -e.dz);
        if (!(h > 0)) throw Error(Errc::RangeError, "lowering building " + std::to_string(b.id) + " below ground");
        b.height = h;
        break;
      }
    }
  }
  const GridSpec grid = scene_grid(scene.config);
  ChangeMap truth = truth_change(scene, out, grid, z_threshold);
  return {std::move(out), std::move(truth)};
}

/// How many edits of each kind random_edits scripts.
struct EditCounts {
  std::size_t add = 1, remove = 1, raise = 1, lower = 1;
  double dz = 3.0;
};

/// Picks distinct existing buildings for remove/raise/lower and places new
/// footprints in free space. Lowered buildings are chosen among those tall
/// enough to stay above ground.
inline std::vector<Edit> random_edits(const SceneModel& scene, const EditCounts& counts, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> ids;
  for (const auto& b : scene.buildings) ids.push_back(b.id);
  std::shuffle(ids.begin(), ids.end(), rng);
  if (counts.remove + counts.raise + counts.lower > ids.size())
    throw Error(Errc::PlacementFailure, "scene has " + std::to_string(ids.size()) + " buildings, edits need " +
                                            std::to_string(counts.remove + counts.raise + counts.lower));
  std::vector<Edit> edits;
  std::size_t next = 0;
  for (std::size_t i = 0; i < counts.remove; ++i) edits.push_back(Edit::remove(ids[next++]));
  for (std::size_t i = 0; i < counts.raise; ++i) edits.push_back(Edit::raise(ids[next++], counts.dz));
  std::vector<int> rest(ids.begin() + static_cast<std::ptrdiff_t>(next), ids.end());
  std::stable_partition(rest.begin(), rest.end(), [&](int id) { return scene.find(id)->height > counts.dz + 1.0; });
  for (std::size_t i = 0; i < counts.lower; ++i) {
    if (i >= rest.size() || !(scene.find(rest[i])->height > counts.dz + 1.0))
      throw Error(Errc::PlacementFailure, "no building tall enough to lower by " + std::to_string(counts.dz));
    edits.push_back(Edit::lower(rest[i], counts.dz));
  }
  SceneModel work = scene;
  for (std::size_t i = 0; i < counts.add; ++i) {
    auto r = detail::random_footprint(work, rng, 4000);
    if (!r) throw Error(Errc::PlacementFailure, "no free space for added building " + std::to_string(i + 1));
    BuildingSpec b = detail::random_building(work.config, *r, work.next_id(), rng);
    work.buildings.push_back(b);
    edits.push_back(Edit::add(b));
  }
  return edits;
}

// ---------------------------------------------------------------------------
// sampling

enum class Material { Ground, Roof, Canopy };

struct SurfaceSample {
  double z;
  Material material;
  const BuildingSpec* building;
};

/// True surface (max of ground, roof, and tree crown) in scene-local coordinates.
inline SurfaceSample surface_at(const SceneModel& scene, double lx, double ly) {
  const double g = scene.config.ground_z;
  SurfaceSample s{g, Material::Ground, nullptr};
  if (const BuildingSpec* b = scene.building_at(lx, ly)) s = {g + b->height, Material::Roof, b};
  for (const Tree& t : scene.trees) {
    const double dx = lx - t.cx, dy = ly - t.cy, d2 = dx * dx + dy * dy;
    if (d2 >= t.radius * t.radius) continue;
    const double z = g + t.height * std::sqrt(1.0 - d2 / (t.radius * t.radius));
    if (z > s.z) s = {z, Material::Canopy, s.building};
  }
  return s;
}

/// Simulated acquisition. Point count is Poisson(density * area) with uniform
/// positions; each point is then dropped with dropout_rate, and square roof
/// holes of 1..max_hole_cells cells remove every point they cover.
inline PointCloud sample_cloud(const SceneModel& scene, const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const double area = config.extent_x * config.extent_y;
  std::poisson_distribution<std::uint64_t> count(config.point_density * area);
  const std::uint64_t n = count(rng);

  std::vector<Rect> holes;
  std::poisson_distribution<int> n_holes(config.roof_holes_per_building);
  std::uniform_int_distribution<std::size_t> hole_cells(1, std::max<std::size_t>(1, config.max_hole_cells));
  for (const auto& b : scene.buildings) {
    const int k = config.roof_holes_per_building > 0 ? n_holes(rng) : 0;
    for (int h = 0; h < k; ++h) {
      const double side = static_cast<double>(hole_cells(rng)) * config.cell_size;
      if (b.footprint.x1 - b.footprint.x0 <= side || b.footprint.y1 - b.footprint.y0 <= side) continue;
      std::uniform_real_distribution<double> hx(b.footprint.x0, b.footprint.x1 - side),
          hy(b.footprint.y0, b.footprint.y1 - side);
      const double x0 = detail::snap(hx(rng), config.cell_size), y0 = detail::snap(hy(rng), config.cell_size);
      holes.push_back({x0, y0, x0 + side, y0 + side});
    }
  }

  std::uniform_real_distribution<double> ux(0.0, config.extent_x), uy(0.0, config.extent_y), u01(0.0, 1.0);
  std::normal_distribution<double> znoise(0.0, 1.0), cnoise(0.0, 1.0);
  std::uniform_int_distribution<int> canopy_returns(2, 4);
  auto draw = [&](const ValueRange& r) {
    return static_cast<std::uint16_t>(std::clamp(std::floor(r.lo + u01(rng) * (r.hi - r.lo)), 0.0, 65535.0));
  };
  auto color = [&](double base) {
    return static_cast<std::uint16_t>(std::clamp(std::round(base + config.color_noise * cnoise(rng)), 0.0, 65535.0));
  };
  static constexpr std::array<double, 3> ground_rgb{100 * 257.0, 105 * 257.0, 85 * 257.0};
  static constexpr std::array<double, 3> canopy_rgb{45 * 257.0, 105 * 257.0, 40 * 257.0};

  std::vector<PointRecord> pts;
  pts.reserve(static_cast<std::size_t>(static_cast<double>(n) * (1.0 - config.dropout_rate)) + 16);
  for (std::uint64_t i = 0; i < n; ++i) {
    const double lx = ux(rng), ly = uy(rng);
    const double drop = u01(rng);
    const double noise = znoise(rng);
    if (drop < config.dropout_rate) continue;
    const SurfaceSample s = surface_at(scene, lx, ly);
    if (s.material == Material::Roof) {
      bool in_hole = false;
      for (const Rect& h : holes) in_hole = in_hole || h.contains(lx, ly);
      if (in_hole) continue;
    }
    PointRecord p;
    p.x = config.origin_x + lx;
    p.y = config.origin_y + ly;
    p.z = config.z_noise_sigma > 0 ? s.z + config.z_noise_sigma * noise : s.z;
    switch (s.material) {
      case Material::Ground:
        p.intensity = draw(config.ground_intensity);
        p.num_returns = 1;
        p.r = color(ground_rgb[0]);
        p.g = color(ground_rgb[1]);
        p.b = color(ground_rgb[2]);
        break;
      case Material::Roof:
        p.intensity = draw(config.roof_intensity);
        p.num_returns = 1;
        p.r = color(s.building->roof_rgb[0]);
        p.g = color(s.building->roof_rgb[1]);
        p.b = color(s.building->roof_rgb[2]);
        break;
      case Material::Canopy:
        p.intensity = draw(config.canopy_intensity);
        p.num_returns = static_cast<std::uint8_t>(canopy_returns(rng));
        p.r = color(canopy_rgb[0]);
        p.g = color(canopy_rgb[1]);
        p.b = color(canopy_rgb[2]);
        break;
    }
    pts.push_back(p);
  }
  return PointCloud(std::move(pts), true, config.crs_tag);
}

/// Two epochs of one area with scripted edits and their truth.
struct ScenePair {
  SceneModel scene_t1, scene_t2;
  std::vector<Edit> edits;
  PointCloud cloud_t1, cloud_t2;
  Mask truth_mask_t1, truth_mask_t2;
  ChangeMap truth_change;
};

inline ScenePair make_scene_pair(const SceneConfig& config, const EditCounts& counts) {
  ScenePair p;
  p.scene_t1 = build_scene(config);
  p.edits = random_edits(p.scene_t1, counts, config.seed ^ 0x5eedULL);
  auto res = apply_edits(p.scene_t1, p.edits);
  p.scene_t2 = std::move(res.scene);
  p.truth_change = std::move(res.truth);
  p.cloud_t1 = sample_cloud(p.scene_t1, config, config.seed * 2 + 1);
  p.cloud_t2 = sample_cloud(p.scene_t2, config, config.seed * 2 + 2);
  const GridSpec grid = scene_grid(config);
  p.truth_mask_t1 = building_mask(p.scene_t1, grid);
  p.truth_mask_t2 = building_mask(p.scene_t2, grid);
  return p;
}

}  // namespace alscd::synth
