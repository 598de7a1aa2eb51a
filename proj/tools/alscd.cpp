// alscd: command-line front end for the change detection pipeline.
#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "alscd/pipeline.hpp"

using namespace alscd;

namespace {

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> cell_size, z_threshold, min_blob_area;
  std::optional<std::size_t> stride;
  std::optional<int> precision;
  std::string out;
};

PipelineConfig resolve(const Flags& f) {
  PipelineConfig c = f.config_path.empty() ? PipelineConfig{} : PipelineConfig::load(f.config_path);
  if (f.seed) c.train_seed = *f.seed;
  if (f.cell_size) c.cell_size = *f.cell_size;
  if (f.z_threshold) c.change.z_threshold = *f.z_threshold;
  if (f.min_blob_area) c.change.min_blob_area = *f.min_blob_area;
  if (f.stride) {
    c.segment_stride = *f.stride;
    c.patch_stride = *f.stride;
  }
  if (f.precision) c.precision = *f.precision;
  c.validate();
  return c;
}

void require_out(const Flags& f) {
  if (f.out.empty()) throw Error(Errc::BadConfig, "--out is required");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Building change detection from multi-temporal airborne LiDAR"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config_path, "key=value config file with [section] headers");
  app.add_option("--seed", f.seed, "seed for synth and training (overrides train.seed)");
  app.add_option("--cell-size", f.cell_size, "raster cell size in meters");
  app.add_option("--stride", f.stride, "patch stride for training and inference (0 = patch size)");
  app.add_option("--z-threshold", f.z_threshold, "elevation change threshold in meters");
  app.add_option("--min-blob-area", f.min_blob_area, "smallest reported change blob in square meters");
  app.add_option("--precision", f.precision, "32 or 64 bit network arithmetic")->check(CLI::IsMember({32, 64}));
  app.add_option("--out", f.out, "output file or directory");

  auto* config = app.add_subcommand("config", "print the resolved configuration");

  auto* synth = app.add_subcommand("synth", "write a synthetic benchmark (two epochs, truth grids)");
  std::optional<std::size_t> scenes;
  synth->add_option("--scenes", scenes, "number of scenes (overrides synth.scenes)");

  auto* raster = app.add_subcommand("rasterize", "cloud (.las/.xyz) to surface grids");
  std::string cloud_path, grid_from;
  unsigned workers = 1;
  raster->add_option("cloud", cloud_path)->required();
  raster->add_option("--grid-from", grid_from, ".asc file whose grid to rasterize onto");
  raster->add_option("--workers", workers, "rasterization threads");

  auto* train = app.add_subcommand("train", "train a segmentation model from scratch on a synth dataset");
  std::string dataset;
  train->add_option("dataset", dataset)->required();

  auto* segment = app.add_subcommand("segment", "building segmentation of a raster directory");
  std::string raster_dir, weights, truth;
  segment->add_option("raster_dir", raster_dir)->required();
  segment->add_option("--weights", weights)->required();
  segment->add_option("--truth", truth, "truth mask (.asc) to score against");

  auto* detect = app.add_subcommand("detect", "change map between two raster directories");
  DetectArgs da;
  std::string dweights, mask1, mask2;
  detect->add_option("epoch1", da.epoch1_dir)->required();
  detect->add_option("epoch2", da.epoch2_dir)->required();
  detect->add_option("--weights", dweights, "segment both epochs with this model");
  detect->add_option("--mask1", mask1, "building mask for epoch 1 instead of a model");
  detect->add_option("--mask2", mask2, "building mask for epoch 2 instead of a model");

  auto* evaluate = app.add_subcommand("evaluate", "score predictions against truth");
  std::string pred_dir, truth_dir, eval_dataset;
  std::vector<std::string> eval_weights;
  evaluate->add_option("pred", pred_dir);
  evaluate->add_option("truth", truth_dir);
  evaluate->add_option("--dataset", eval_dataset, "dataset for a weights comparison");
  evaluate->add_option("--weights", eval_weights, "weight files to compare on the validation scenes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const PipelineConfig cfg = resolve(f);
    if (*config) {
      std::cout << cfg.to_text();
    } else if (*synth) {
      require_out(f);
      PipelineConfig c = cfg;
      if (scenes) c.scenes = *scenes;
      const auto rep = cmd_synth(c, f.seed.value_or(c.scene.seed), f.out);
      for (const auto& d : rep.scene_dirs) std::cout << d << "\n";
    } else if (*raster) {
      require_out(f);
      std::optional<GridSpec> grid;
      if (!grid_from.empty()) grid = grid_from_file(grid_from);
      const SurfaceRaster r = cmd_rasterize(cloud_path, cfg, f.out, grid, workers);
      std::cout << "grid=" << r.spec.width << "x" << r.spec.height << "\n";
    } else if (*train) {
      require_out(f);
      const auto rep = cmd_train(dataset, cfg, f.out, &std::cout);
      std::cout << "train_patches=" << rep.train_patches << "\nval_patches=" << rep.val_patches
                << "\nbest_val_iou=" << format_double(rep.best_val_iou()) << "\n";
    } else if (*segment) {
      require_out(f);
      const auto rep = cmd_segment(raster_dir, weights, cfg, f.out,
                                   truth.empty() ? std::nullopt : std::optional<std::string>(truth));
      if (rep.iou) std::cout << "iou=" << format_double(*rep.iou) << "\n";
    } else if (*detect) {
      require_out(f);
      if (!dweights.empty()) da.weights = dweights;
      if (!mask1.empty()) da.mask1 = mask1;
      if (!mask2.empty()) da.mask2 = mask2;
      const auto rep = cmd_detect(da, cfg, f.out);
      std::cout << blob_table(rep.blobs);
    } else if (*evaluate) {
      if (!eval_weights.empty()) {
        if (eval_dataset.empty()) throw Error(Errc::BadConfig, "--weights needs --dataset");
        std::cout << cmd_compare(eval_dataset, eval_weights, cfg);
      } else {
        if (pred_dir.empty() || truth_dir.empty()) throw Error(Errc::BadConfig, "evaluate needs pred and truth directories");
        std::cout << cmd_evaluate(pred_dir, truth_dir);
      }
    }
  } catch (const Error& e) {
    std::cerr << "alscd: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "alscd: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
