#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "alscd/change.hpp"
#include "alscd/config.hpp"
#include "alscd/io.hpp"
#include "alscd/metrics.hpp"
#include "alscd/raster.hpp"
#include "alscd/segnet.hpp"
#include "alscd/synthgen.hpp"

// End-to-end commands. Each cmd_* function is what the CLI subcommand of the
// same name runs; they are also called directly by the acceptance harness.

namespace alscd {

/// Every setting of the pipeline. An empty file yields the defaults below.
struct PipelineConfig {
  // [grid]
  double cell_size = 0.5;
  std::size_t fill_radius = 3;  // cells; 0 disables hole filling

  // [model] (keys of ModelConfig)
  ModelConfig model;

  // [train]
  nn::Hyperparams hp;
  std::uint64_t train_seed = 42;
  bool augment = true;
  std::size_t patch_stride = 0;  // 0 = patch size
  std::size_t val_scenes = 0;    // 0 = one fifth of the scenes, at least 1
  std::optional<double> target_iou;  // stop once validation IOU reaches it
  int precision = 32;

  // [segment]
  std::size_t segment_stride = 0;  // 0 = patch size

  // [change]
  ChangeParams change;

  // [synth]
  synth::SceneConfig scene;
  synth::EditCounts edits;
  std::size_t scenes = 1;
  std::string cloud_format = "las";

  void validate() const {
    if (!(cell_size > 0)) throw Error(Errc::BadConfig, "grid.cell_size must be > 0");
    if (precision != 32 && precision != 64) throw Error(Errc::BadConfig, "train.precision must be 32 or 64");
    if (hp.batch_size == 0) throw Error(Errc::BadConfig, "train.batch_size must be >= 1");
    if (!(hp.lr > 0)) throw Error(Errc::BadConfig, "train.lr must be > 0");
    if (scenes == 0) throw Error(Errc::BadConfig, "synth.scenes must be >= 1");
    if (cloud_format != "las" && cloud_format != "xyz") throw Error(Errc::BadConfig, "synth.cloud_format must be las or xyz");
    model.validate();
    change.validate();
    synth::SceneConfig s = scene;
    s.cell_size = cell_size;
    s.validate();
  }

  /// Scene parameters with the grid cell size and a seed applied.
  synth::SceneConfig scene_for(std::uint64_t seed) const {
    synth::SceneConfig s = scene;
    s.cell_size = cell_size;
    s.seed = seed;
    return s;
  }

  static PipelineConfig from_config(const Config& c) {
    static const std::map<std::string, std::set<std::string>> known{
        {"grid", {"cell_size", "fill_radius"}},
        {"model", {"streams", "in_channels", "encoder_widths", "bottleneck_width", "patch_size", "kernel_size", "seed"}},
        {"train",
         {"lr", "beta1", "beta2", "eps", "batch_size", "epochs", "plateau_patience", "lr_decay", "plateau_min_delta", "seed",
          "augment", "patch_stride", "val_scenes", "target_iou", "precision"}},
        {"segment", {"stride"}},
        {"change", {"kernel", "z_threshold", "min_blob_area", "connectivity"}},
        {"synth",
         {"origin_x", "origin_y", "extent_x", "extent_y", "ground_z", "point_density", "dropout_rate", "z_noise_sigma",
          "n_buildings", "tree_count", "roof_holes_per_building", "min_side", "max_side", "min_building_area",
          "max_building_area", "min_height", "max_height", "building_gap", "crs", "scenes", "add", "remove", "raise", "lower", "dz",
          "cloud_format"}},
    };
    for (const auto& [name, keys] : known) {
      for (const auto& kv : c.section(name))
        if (!keys.count(kv.first)) throw Error(Errc::BadConfig, "unknown key " + name + "." + kv.first);
    }
    for (const auto& name : c.section_names())
      if (!name.empty() && !known.count(name)) throw Error(Errc::BadConfig, "unknown section [" + name + "]");
    for (const auto& kv : c.section(""))
      throw Error(Errc::BadConfig, "key " + kv.first + " must be inside a section");

    PipelineConfig p;
    p.cell_size = c.get<double>("grid", "cell_size", p.cell_size);
    p.fill_radius = c.get<std::size_t>("grid", "fill_radius", p.fill_radius);
    p.model = ModelConfig::from_config(c, "model");

    auto& hp = p.hp;
    hp.lr = c.get<double>("train", "lr", hp.lr);
    hp.beta1 = c.get<double>("train", "beta1", hp.beta1);
    hp.beta2 = c.get<double>("train", "beta2", hp.beta2);
    hp.eps = c.get<double>("train", "eps", hp.eps);
    hp.batch_size = c.get<std::size_t>("train", "batch_size", hp.batch_size);
    hp.epochs = c.get<std::size_t>("train", "epochs", hp.epochs);
    hp.plateau_patience = c.get<std::size_t>("train", "plateau_patience", hp.plateau_patience);
    hp.lr_decay = c.get<double>("train", "lr_decay", hp.lr_decay);
    hp.plateau_min_delta = c.get<double>("train", "plateau_min_delta", hp.plateau_min_delta);
    p.train_seed = c.get<std::uint64_t>("train", "seed", p.train_seed);
    p.augment = c.get<bool>("train", "augment", p.augment);
    p.patch_stride = c.get<std::size_t>("train", "patch_stride", p.patch_stride);
    p.val_scenes = c.get<std::size_t>("train", "val_scenes", p.val_scenes);
    if (c.has("train", "target_iou")) p.target_iou = c.get<double>("train", "target_iou", 0.0);
    p.precision = c.get<int>("train", "precision", p.precision);

    p.segment_stride = c.get<std::size_t>("segment", "stride", p.segment_stride);

    p.change.kernel = c.get<std::size_t>("change", "kernel", p.change.kernel);
    p.change.z_threshold = c.get<double>("change", "z_threshold", p.change.z_threshold);
    p.change.min_blob_area = c.get<double>("change", "min_blob_area", p.change.min_blob_area);
    p.change.connectivity = c.get<int>("change", "connectivity", p.change.connectivity);

    auto& s = p.scene;
    s.origin_x = c.get<double>("synth", "origin_x", s.origin_x);
    s.origin_y = c.get<double>("synth", "origin_y", s.origin_y);
    s.extent_x = c.get<double>("synth", "extent_x", s.extent_x);
    s.extent_y = c.get<double>("synth", "extent_y", s.extent_y);
    s.ground_z = c.get<double>("synth", "ground_z", s.ground_z);
    s.point_density = c.get<double>("synth", "point_density", s.point_density);
    s.dropout_rate = c.get<double>("synth", "dropout_rate", s.dropout_rate);
    s.z_noise_sigma = c.get<double>("synth", "z_noise_sigma", s.z_noise_sigma);
    s.n_buildings = c.get<std::size_t>("synth", "n_buildings", s.n_buildings);
    s.tree_count = c.get<std::size_t>("synth", "tree_count", s.tree_count);
    s.roof_holes_per_building = c.get<double>("synth", "roof_holes_per_building", s.roof_holes_per_building);
    s.min_side = c.get<double>("synth", "min_side", s.min_side);
    s.max_side = c.get<double>("synth", "max_side", s.max_side);
    s.min_building_area = c.get<double>("synth", "min_building_area", s.min_building_area);
    s.max_building_area = c.get<double>("synth", "max_building_area", s.max_building_area);
    s.min_height = c.get<double>("synth", "min_height", s.min_height);
    s.max_height = c.get<double>("synth", "max_height", s.max_height);
    s.building_gap = c.get<double>("synth", "building_gap", s.building_gap);
    s.crs_tag = c.get<std::string>("synth", "crs", s.crs_tag);
    p.scenes = c.get<std::size_t>("synth", "scenes", p.scenes);
    p.edits.add = c.get<std::size_t>("synth", "add", p.edits.add);
    p.edits.remove = c.get<std::size_t>("synth", "remove", p.edits.remove);
    p.edits.raise = c.get<std::size_t>("synth", "raise", p.edits.raise);
    p.edits.lower = c.get<std::size_t>("synth", "lower", p.edits.lower);
    p.edits.dz = c.get<double>("synth", "dz", p.edits.dz);
    p.cloud_format = c.get<std::string>("synth", "cloud_format", p.cloud_format);
    p.validate();
    return p;
  }

  static PipelineConfig parse(std::string_view text) { return from_config(Config::parse(text)); }
  static PipelineConfig load(const std::string& path) { return from_config(Config::load(path)); }

  /// The full configuration in file syntax (defaults included).
  std::string to_text() const {
    const auto f = format_double;
    std::string out = "[grid]\ncell_size=" + f(cell_size) + "\nfill_radius=" + std::to_string(fill_radius) + "\n";
    out += "\n[model]\n" + model.to_text();
    out += "\n[train]\nlr=" + f(hp.lr) + "\nbeta1=" + f(hp.beta1) + "\nbeta2=" + f(hp.beta2) + "\neps=" + f(hp.eps) +
           "\nbatch_size=" + std::to_string(hp.batch_size) + "\nepochs=" + std::to_string(hp.epochs) +
           "\nplateau_patience=" + std::to_string(hp.plateau_patience) + "\nlr_decay=" + f(hp.lr_decay) +
           "\nplateau_min_delta=" + f(hp.plateau_min_delta) + "\nseed=" + std::to_string(train_seed) +
           "\naugment=" + (augment ? "true" : "false") + "\npatch_stride=" + std::to_string(patch_stride) +
           "\nval_scenes=" + std::to_string(val_scenes) + "\n";
    if (target_iou) out += "target_iou=" + f(*target_iou) + "\n";
    out += "precision=" + std::to_string(precision) + "\n";
    out += "\n[segment]\nstride=" + std::to_string(segment_stride) + "\n";
    out += "\n[change]\nkernel=" + std::to_string(change.kernel) + "\nz_threshold=" + f(change.z_threshold) +
           "\nmin_blob_area=" + f(change.min_blob_area) + "\nconnectivity=" + std::to_string(change.connectivity) + "\n";
    out += "\n[synth]\norigin_x=" + f(scene.origin_x) + "\norigin_y=" + f(scene.origin_y) + "\nextent_x=" + f(scene.extent_x) +
           "\nextent_y=" + f(scene.extent_y) + "\nground_z=" + f(scene.ground_z) + "\npoint_density=" + f(scene.point_density) +
           "\ndropout_rate=" + f(scene.dropout_rate) + "\nz_noise_sigma=" + f(scene.z_noise_sigma) +
           "\nn_buildings=" + std::to_string(scene.n_buildings) + "\ntree_count=" + std::to_string(scene.tree_count) +
           "\nroof_holes_per_building=" + f(scene.roof_holes_per_building) + "\nmin_side=" + f(scene.min_side) +
           "\nmax_side=" + f(scene.max_side) + "\nmin_building_area=" + f(scene.min_building_area) +
           "\nmax_building_area=" + f(scene.max_building_area) + "\nmin_height=" + f(scene.min_height) +
           "\nmax_height=" + f(scene.max_height) + "\nbuilding_gap=" + f(scene.building_gap) + "\ncrs=" + scene.crs_tag +
           "\nscenes=" + std::to_string(scenes) + "\nadd=" + std::to_string(edits.add) + "\nremove=" +
           std::to_string(edits.remove) + "\nraise=" + std::to_string(edits.raise) + "\nlower=" + std::to_string(edits.lower) +
           "\ndz=" + f(edits.dz) + "\ncloud_format=" + cloud_format + "\n";
    return out;
  }
};

// ---------------------------------------------------------------------------
// synth
//
// A scene directory holds t1.<ext>, t2.<ext>, truth_t1.asc, truth_t2.asc,
// label.asc (truth change classes), edits.txt, scene.wld and crs.txt. With
// synth.scenes > 1 the output holds scene_000, scene_001, ... seeded
// seed, seed + 1, ...

namespace detail {

inline std::string edits_text(const std::vector<synth::Edit>& edits) {
  std::string out;
  for (const auto& e : edits) {
    out += std::string(synth::edit_kind_name(e.kind));
    if (e.kind == synth::EditKind::AddBuilding) {
      const auto& r = e.building.footprint;
      out += " id=" + std::to_string(e.building.id) + " x0=" + format_double(r.x0) + " y0=" + format_double(r.y0) +
             " x1=" + format_double(r.x1) + " y1=" + format_double(r.y1) + " height=" + format_double(e.building.height);
    } else {
      out += " id=" + std::to_string(e.target);
      if (e.dz != 0) out += " dz=" + format_double(e.dz);
    }
    out += "\n";
  }
  return out;
}

inline std::string scene_name(std::size_t i) {
  std::string n = std::to_string(i);
  return "scene_" + std::string(n.size() < 3 ? 3 - n.size() : 0, '0') + n;
}

inline void write_scene(const std::string& dir, const synth::ScenePair& p, const std::string& ext) {
  ensure_dir(dir);
  const GridSpec& s = p.truth_change.spec;
  write_cloud(join_path(dir, "t1." + ext), p.cloud_t1);
  write_cloud(join_path(dir, "t2." + ext), p.cloud_t2);
  save_ascii_grid(join_path(dir, "truth_t1.asc"), s, p.truth_mask_t1, kLabelNoData);
  save_ascii_grid(join_path(dir, "truth_t2.asc"), s, p.truth_mask_t2, kLabelNoData);
  save_ascii_grid(join_path(dir, "label.asc"), s, p.truth_change.label, kLabelNoData);
  write_file(join_path(dir, "edits.txt"), edits_text(p.edits));
  write_file(join_path(dir, "scene.wld"), world_file(s));
  write_file(join_path(dir, "crs.txt"), s.crs_tag + "\n");
}

}  // namespace detail

struct SynthReport {
  std::vector<std::string> scene_dirs;
};

inline SynthReport cmd_synth(const PipelineConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  cfg.validate();
  SynthReport rep;
  for (std::size_t i = 0; i < cfg.scenes; ++i) {
    const std::string dir = cfg.scenes == 1 ? out_dir : join_path(out_dir, detail::scene_name(i));
    const synth::ScenePair pair = synth::make_scene_pair(cfg.scene_for(seed + i), cfg.edits);
    detail::write_scene(dir, pair, cfg.cloud_format);
    rep.scene_dirs.push_back(dir);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// rasterize

/// Grid of an existing .asc file; crs.txt next to it supplies the CRS tag.
inline GridSpec grid_from_file(const std::string& asc_path) {
  GridSpec s = load_ascii_grid(asc_path).spec;
  s.crs_tag = detail::read_crs(std::filesystem::path(asc_path).parent_path().string());
  return s;
}

/// Surface raster of a cloud, hole-filled with grid.fill_radius. Without
/// `grid` the lattice is derived from the cloud bounds.
inline SurfaceRaster rasterize_cloud(const PointCloud& cloud, const PipelineConfig& cfg,
                                     const std::optional<GridSpec>& grid = std::nullopt, unsigned workers = 1) {
  GridSpec spec = grid ? *grid : grid_for_cloud(cloud, cfg.cell_size);
  if (grid && spec.crs_tag.empty()) spec.crs_tag = cloud.crs_tag();
  return fill_holes(surface_extract(cloud, spec, workers), cfg.fill_radius);
}

inline SurfaceRaster cmd_rasterize(const std::string& cloud_path, const PipelineConfig& cfg, const std::string& out_dir,
                                   const std::optional<GridSpec>& grid = std::nullopt, unsigned workers = 1) {
  if (!std::filesystem::exists(cloud_path)) throw Error(Errc::IoError, "no such cloud: " + cloud_path);
  SurfaceRaster r = rasterize_cloud(read_cloud(cloud_path), cfg, grid, workers);
  save_surface_raster(out_dir, r);
  return r;
}

// ---------------------------------------------------------------------------
// train

namespace detail {

inline std::string find_cloud(const std::string& dir, const std::string& stem) {
  for (const char* ext : {".las", ".xyz", ".txt"}) {
    const std::string p = join_path(dir, stem + ext);
    if (std::filesystem::exists(p)) return p;
  }
  throw Error(Errc::IoError, "no " + stem + " cloud (.las/.xyz) in " + dir);
}

}  // namespace detail

/// Scene directories of a dataset: its scene_* children in name order, or
/// the directory itself when it is a single scene.
inline std::vector<std::string> dataset_scenes(const std::string& dataset_dir) {
  if (!std::filesystem::is_directory(dataset_dir)) throw Error(Errc::IoError, "no such dataset directory: " + dataset_dir);
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dataset_dir))
    if (e.is_directory() && e.path().filename().string().starts_with("scene_")) out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  if (out.empty()) out.push_back(dataset_dir);
  return out;
}

/// One labelled epoch: the rasterized cloud on the truth grid.
struct LabelledRaster {
  SurfaceRaster raster;
  Mask truth;
};

inline std::vector<LabelledRaster> load_scene_epochs(const std::string& scene_dir, const PipelineConfig& cfg) {
  std::vector<LabelledRaster> out;
  for (const char* t : {"t1", "t2"}) {
    const std::string truth_path = join_path(scene_dir, std::string("truth_") + t + ".asc");
    const GridSpec spec = grid_from_file(truth_path);
    LabelledRaster e{rasterize_cloud(read_cloud(detail::find_cloud(scene_dir, t)), cfg, spec), load_mask(truth_path)};
    out.push_back(std::move(e));
  }
  return out;
}

/// Training patches of one raster: every stream's channels back to back
/// plus the truth mask, tiled at `stride`.
template <class T>
std::vector<Patch<T>> labelled_patches(const Model<T>& m, const LabelledRaster& e, std::size_t stride) {
  const std::size_t S = m.config.patch_size;
  if (S > e.raster.spec.width || S > e.raster.spec.height)
    throw Error(Errc::BadConfig, "model.patch_size " + std::to_string(S) + " exceeds the raster (" +
                                     std::to_string(e.raster.spec.width) + " x " + std::to_string(e.raster.spec.height) + ")");
  const auto inputs = stream_inputs(m, {&e.raster});
  const std::size_t H = e.raster.spec.height, W = e.raster.spec.width;
  std::vector<T> joined;
  for (const auto& t : inputs) joined.insert(joined.end(), t.vec().begin(), t.vec().end());
  const Tensor<T> x({m.config.total_in_channels(), H, W}, std::move(joined));
  Tensor<T> y({1, H, W});
  for (std::size_t i = 0; i < H * W; ++i) y[i] = e.truth[i] ? T(1) : T(0);
  return tile(x, y, S, stride == 0 ? S : stride);
}

struct TrainReport {
  TrainHistory history;
  std::size_t train_scenes = 0, val_scenes = 0;
  std::size_t train_patches = 0, val_patches = 0;
  double seconds = 0;  // optimisation only (excludes data preparation)
  double best_val_iou() const {
    double b = 0;
    for (const auto& r : history) b = std::max(b, r.val_iou);
    return b;
  }
};

inline std::string history_csv(const TrainHistory& h) {
  std::string out = "epoch,train_loss,val_loss,val_iou,lr\n";
  for (const auto& r : h)
    out += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," + format_double(r.val_loss) + "," +
           format_double(r.val_iou) + "," + format_double(r.lr) + "\n";
  return out;
}

namespace detail {

template <class T>
TrainReport train_typed(const std::string& dataset_dir, const PipelineConfig& cfg, const std::string& weights_out,
                        std::ostream* progress) {
  const auto scenes = dataset_scenes(dataset_dir);
  if (scenes.size() < 2) throw Error(Errc::EmptyDataset, "training needs at least 2 scenes (train + validation)");
  const std::size_t n_val = cfg.val_scenes ? cfg.val_scenes : std::max<std::size_t>(1, scenes.size() / 5);
  if (n_val >= scenes.size())
    throw Error(Errc::BadConfig, "train.val_scenes " + std::to_string(n_val) + " leaves no training scenes");
  const std::size_t n_train = scenes.size() - n_val;

  std::vector<LabelledRaster> train_epochs, val_epochs;
  for (std::size_t i = 0; i < scenes.size(); ++i)
    for (auto& e : load_scene_epochs(scenes[i], cfg)) (i < n_train ? train_epochs : val_epochs).push_back(std::move(e));

  Model<T> m = build_model<T>(cfg.model);
  // one set of min/max statistics from the training rasters, shared by every stream reading ZIN
  NormStats stats = zin_stats(train_epochs.front().raster);
  for (const auto& e : train_epochs) stats = merge_stats(stats, zin_stats(e.raster));
  m.norm_stats.assign(m.config.stream_count(), stats);

  std::vector<Patch<T>> train_set, val_set;
  for (const auto& e : train_epochs)
    for (auto& p : labelled_patches(m, e, cfg.patch_stride)) train_set.push_back(std::move(p));
  for (const auto& e : val_epochs)
    for (auto& p : labelled_patches(m, e, cfg.patch_stride)) val_set.push_back(std::move(p));

  TrainOptions opt;
  opt.seed = cfg.train_seed;
  opt.augment = cfg.augment;
  opt.stop_at_val_iou = cfg.target_iou;
  if (progress) {
    *progress << "epoch,train_loss,val_loss,val_iou,lr\n";
    opt.on_epoch = [progress](const EpochRecord& r) {
      *progress << r.epoch << "," << format_double(r.train_loss) << "," << format_double(r.val_loss) << ","
                << format_double(r.val_iou) << "," << format_double(r.lr) << std::endl;
    };
  }
  TrainReport rep;
  rep.train_scenes = n_train;
  rep.val_scenes = n_val;
  rep.train_patches = train_set.size();
  rep.val_patches = val_set.size();
  const auto t0 = std::chrono::steady_clock::now();
  rep.history = train(m, train_set, val_set, cfg.hp, opt);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto parent = std::filesystem::path(weights_out).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
  save_weights(m, weights_out);
  write_file(weights_out + ".history.csv", history_csv(rep.history));
  return rep;
}

}  // namespace detail

/// Trains from scratch on a synth dataset (resuming is not supported) and
/// writes `weights_out` plus `weights_out`.history.csv. The last
/// train.val_scenes scenes form the validation split.
inline TrainReport cmd_train(const std::string& dataset_dir, const PipelineConfig& cfg, const std::string& weights_out,
                             std::ostream* progress = nullptr) {
  cfg.validate();
  return cfg.precision == 64 ? detail::train_typed<double>(dataset_dir, cfg, weights_out, progress)
                             : detail::train_typed<float>(dataset_dir, cfg, weights_out, progress);
}

// ---------------------------------------------------------------------------
// segment

template <class T>
SegMap segment_with(const std::string& weights, const SurfaceRaster& raster, std::size_t stride) {
  Model<T> m = load_weights<T>(weights);
  return segment_raster(m, raster, stride);
}

inline SegMap segment_with(const std::string& weights, const SurfaceRaster& raster, const PipelineConfig& cfg) {
  return cfg.precision == 64 ? segment_with<double>(weights, raster, cfg.segment_stride)
                             : segment_with<float>(weights, raster, cfg.segment_stride);
}

inline void save_segmentation(const std::string& dir, const SegMap& seg) {
  ensure_dir(dir);
  save_ascii_grid(join_path(dir, "prob.asc"), seg.spec, seg.prob, kFloatNoData);
  save_ascii_grid(join_path(dir, "building.asc"), seg.spec, seg.building, kLabelNoData);
  write_file(join_path(dir, "segment.wld"), world_file(seg.spec));
  write_file(join_path(dir, "crs.txt"), seg.spec.crs_tag + "\n");
}

struct SegmentReport {
  SegMap seg;
  std::optional<double> iou;
};

/// Writes prob.asc and building.asc to `out_dir`; with a truth mask the IOU
/// over all cells is reported.
inline SegmentReport cmd_segment(const std::string& raster_dir, const std::string& weights, const PipelineConfig& cfg,
                                 const std::string& out_dir, const std::optional<std::string>& truth_mask = std::nullopt) {
  const SurfaceRaster r = load_surface_raster(raster_dir);
  SegmentReport rep{segment_with(weights, r, cfg), std::nullopt};
  if (truth_mask) {
    const Mask truth = load_mask(*truth_mask);
    require_shape(truth.same_shape(rep.seg.spec), "truth mask does not match the raster grid");
    rep.iou = iou(confusion(rep.seg.building, truth));
  }
  save_segmentation(out_dir, rep.seg);
  return rep;
}

// ---------------------------------------------------------------------------
// detect

/// Where each epoch's building mask comes from, in priority order: an
/// explicit mask file, a weights file, building.asc in the epoch directory.
struct DetectArgs {
  std::string epoch1_dir, epoch2_dir;
  std::optional<std::string> weights;
  std::optional<std::string> mask1, mask2;
};

struct DetectReport {
  ChangeMap map;
  std::vector<ChangeBlob> blobs;
};

namespace detail {

inline Mask epoch_mask(const std::string& dir, const std::optional<std::string>& mask, const SurfaceRaster& r,
                       const std::optional<std::string>& weights, const PipelineConfig& cfg) {
  std::string path;
  if (mask) {
    path = *mask;
  } else if (weights) {
    return segment_with(*weights, r, cfg).building;
  } else {
    path = join_path(dir, "building.asc");
    if (!std::filesystem::exists(path))
      throw Error(Errc::BadConfig, "no building mask for " + dir + ": pass weights or a mask, or run segment into it");
  }
  GridSpec s;
  Mask m = load_mask(path, &s);
  s.crs_tag = r.spec.crs_tag;
  require_same_spec(s, r.spec, "building mask " + path);
  return m;
}

}  // namespace detail

inline DetectReport detect_changes(const SurfaceRaster& r1, const Mask& b1, const SurfaceRaster& r2, const Mask& b2,
                                   const ChangeParams& params) {
  require_same_spec(r1.spec, r2.spec, "epoch rasters");
  const DiffChannels d = diff_channels(build_change_input(b1, r1), build_change_input(b2, r2));
  DetectReport rep;
  rep.map = classify_changes(d, params);
  rep.blobs = blob_stats(rep.map, &d.shared);
  return rep;
}

/// Writes label.asc, magnitude.asc, change.wld, crs.txt, overlay.png and
/// blobs.csv to `out_dir`.
inline DetectReport cmd_detect(const DetectArgs& a, const PipelineConfig& cfg, const std::string& out_dir) {
  cfg.change.validate();
  const SurfaceRaster r1 = load_surface_raster(a.epoch1_dir), r2 = load_surface_raster(a.epoch2_dir);
  require_same_spec(r1.spec, r2.spec, "epoch rasters");
  const Mask b1 = detail::epoch_mask(a.epoch1_dir, a.mask1, r1, a.weights, cfg);
  const Mask b2 = detail::epoch_mask(a.epoch2_dir, a.mask2, r2, a.weights, cfg);
  DetectReport rep = detect_changes(r1, b1, r2, b2, cfg.change);
  save_change_map(out_dir, rep.map);
  save_png(join_path(out_dir, "overlay.png"), overlay_render(rep.map, b2));
  write_file(join_path(out_dir, "blobs.csv"), blob_table(rep.blobs));
  return rep;
}

// ---------------------------------------------------------------------------
// evaluate

namespace detail {

inline ChangeMap load_labels(const std::string& path) {
  const AsciiGrid g = load_ascii_grid(path);
  ChangeMap m(g.spec);
  m.label = to_byte_grid(g, path);
  for (auto l : m.label.data)
    if (l > 4 && l != label_value(ChangeLabel::NoData)) throw Error(Errc::RangeError, path + ": unknown change label");
  return m;
}

}  // namespace detail

/// key=value report. building.asc present in both directories gives
/// segmentation IOU; label.asc in both gives blob precision/recall per
/// change class. Grids are compared by shape and georeference.
inline std::string cmd_evaluate(const std::string& pred_dir, const std::string& truth_dir) {
  std::string out;
  bool any = false;
  const std::string pb = join_path(pred_dir, "building.asc"), tb = join_path(truth_dir, "building.asc");
  if (std::filesystem::exists(pb) && std::filesystem::exists(tb)) {
    GridSpec ps, ts;
    const Mask p = load_mask(pb, &ps), t = load_mask(tb, &ts);
    require_same_spec(ps, ts, "building masks");
    const ConfusionCounts c = confusion(p, t);
    out += "iou=" + format_double(iou(c)) + "\ntp=" + std::to_string(c.tp) + "\nfp=" + std::to_string(c.fp) +
           "\nfn=" + std::to_string(c.fn) + "\ntn=" + std::to_string(c.tn) + "\n";
    any = true;
  }
  const std::string pl = join_path(pred_dir, "label.asc"), tl = join_path(truth_dir, "label.asc");
  if (std::filesystem::exists(pl) && std::filesystem::exists(tl)) {
    const BlobScores s = blob_pr(detail::load_labels(pl), detail::load_labels(tl));
    for (ChangeLabel cls : kChangeClasses) {
      const ClassScore& c = s[cls];
      const std::string k(label_name(cls));
      out += k + ".precision=" + format_double(c.precision()) + "\n" + k + ".recall=" + format_double(c.recall()) + "\n" +
             k + ".predicted=" + std::to_string(c.predicted) + "\n" + k + ".truth=" + std::to_string(c.truth) + "\n";
    }
    any = true;
  }
  if (!any) throw Error(Errc::IoError, "nothing to compare: need building.asc or label.asc in both " + pred_dir + " and " + truth_dir);
  return out;
}

/// Segmentation IOU of several weight files on the validation scenes of a
/// dataset (same split as cmd_train), one "name iou" row per file.
inline std::string cmd_compare(const std::string& dataset_dir, const std::vector<std::string>& weights,
                               const PipelineConfig& cfg) {
  const auto scenes = dataset_scenes(dataset_dir);
  const std::size_t n_val = std::min(scenes.size(), cfg.val_scenes ? cfg.val_scenes : std::max<std::size_t>(1, scenes.size() / 5));
  std::vector<LabelledRaster> val;
  for (std::size_t i = scenes.size() - n_val; i < scenes.size(); ++i)
    for (auto& e : load_scene_epochs(scenes[i], cfg)) val.push_back(std::move(e));
  std::string out = "model,iou\n";
  for (const auto& w : weights) {
    ConfusionCounts total;
    for (const auto& e : val) {
      total += confusion(segment_with(w, e.raster, cfg).building, e.truth);
    }
    out += std::filesystem::path(w).filename().string() + "," + format_double(iou(total)) + "\n";
  }
  return out;
}

/// Process exit code for an error: 2 config, 3 I/O, 4 data or shape.
inline int exit_code_for(Errc c) {
  switch (c) {
    case Errc::BadConfig: return 2;
    case Errc::IoError: return 3;
    default: return 4;
  }
}

}  // namespace alscd
