#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "alscd/error.hpp"
#include "alscd/tensor.hpp"

namespace alscd {

inline constexpr std::size_t kPatchSize = 128;

/// A size x size window of a C x H x W tensor. Edge windows are zero-padded;
/// valid_h x valid_w is the part that came from the parent.
template <class T>
struct Patch {
  Tensor<T> data;  // C x S x S
  Tensor<T> mask;  // 1 x S x S, empty when unlabeled
  std::size_t row0 = 0, col0 = 0;
  std::size_t valid_h = 0, valid_w = 0;

  bool has_mask() const noexcept { return mask.size() > 0; }
  std::size_t size() const noexcept { return data.dim(1); }

  friend bool operator==(const Patch&, const Patch&) = default;
};

/// Window origins along one axis: multiples of stride, with the last window
/// moved back to abut the border. A single origin 0 when dim <= size.
inline std::vector<std::size_t> tile_origins(std::size_t dim, std::size_t size, std::size_t stride) {
  if (size < 1 || stride < 1 || stride > size)
    throw Error(Errc::BadStride, "need size >= 1 and 1 <= stride <= size, got size " + std::to_string(size) +
                                     " stride " + std::to_string(stride));
  std::vector<std::size_t> o;
  if (dim <= size) return {0};
  for (std::size_t p = 0; p + size < dim; p += stride) o.push_back(p);
  if (o.back() != dim - size) o.push_back(dim - size);
  return o;
}

/// Cuts `x` (C x H x W) and optional `mask` (1 x H x W, or empty) into
/// patches, row-major by origin.
template <class T>
std::vector<Patch<T>> tile(const Tensor<T>& x, const Tensor<T>& mask, std::size_t size = kPatchSize,
                           std::size_t stride = kPatchSize) {
  require_shape(x.rank() == 3, "tile: expected C x H x W, got " + shape_str(x.shape()));
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const bool labeled = mask.size() > 0;
  if (labeled) require_shape(mask.shape() == Shape{1, H, W}, "tile: mask must be 1 x H x W, got " + shape_str(mask.shape()));
  const auto rows = tile_origins(H, size, stride), cols = tile_origins(W, size, stride);
  std::vector<Patch<T>> out;
  out.reserve(rows.size() * cols.size());
  for (std::size_t r0 : rows)
    for (std::size_t c0 : cols) {
      Patch<T> p;
      p.row0 = r0;
      p.col0 = c0;
      p.valid_h = std::min(size, H - r0);
      p.valid_w = std::min(size, W - c0);
      p.data = Tensor<T>({C, size, size});
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t r = 0; r < p.valid_h; ++r)
          std::copy_n(&x.at(c, r0 + r, c0), p.valid_w, &p.data.at(c, r, 0));
      if (labeled) {
        p.mask = Tensor<T>({1, size, size});
        for (std::size_t r = 0; r < p.valid_h; ++r)
          std::copy_n(&mask.at(0, r0 + r, c0), p.valid_w, &p.mask.at(0, r, 0));
      }
      out.push_back(std::move(p));
    }
  return out;
}

template <class T>
std::vector<Patch<T>> tile(const Tensor<T>& x, std::size_t size = kPatchSize, std::size_t stride = kPatchSize) {
  return tile(x, Tensor<T>{}, size, stride);
}

/// Reassembles patch data into C x H x W. Cells covered by several patches
/// get the mean of the contributions (valid extents only). The mean is
/// accumulated incrementally so that equal contributions reproduce their
/// value exactly.
template <class T>
Tensor<T> stitch(const std::vector<Patch<T>>& patches, std::size_t height, std::size_t width) {
  if (patches.empty()) throw Error(Errc::CoverageGap, "stitch: no patches");
  const std::size_t C = patches.front().data.dim(0);
  Tensor<T> out({C, height, width});
  std::vector<std::uint32_t> count(height * width, 0);
  for (const auto& p : patches) {
    require_shape(p.data.dim(0) == C, "stitch: channel count differs between patches");
    if (p.row0 + p.valid_h > height || p.col0 + p.valid_w > width)
      throw Error(Errc::ShapeMismatch, "stitch: patch extends past the grid");
    for (std::size_t r = 0; r < p.valid_h; ++r)
      for (std::size_t q = 0; q < p.valid_w; ++q) {
        const std::size_t cell = (p.row0 + r) * width + p.col0 + q;
        const auto k = static_cast<T>(++count[cell]);
        for (std::size_t c = 0; c < C; ++c) {
          T& m = out[c * height * width + cell];
          m += (p.data.at(c, r, q) - m) / k;
        }
      }
  }
  const auto gap = std::find(count.begin(), count.end(), 0u);
  if (gap != count.end()) {
    const auto i = static_cast<std::size_t>(gap - count.begin());
    throw Error(Errc::CoverageGap, "stitch: cell (row " + std::to_string(i / width) + ", col " +
                                       std::to_string(i % width) + ") not covered by any patch");
  }
  return out;
}

// ---------------------------------------------------------------------------
// augmentation

struct AugmentOp {
  enum Kind { HFlip, VFlip, Rot90, Rot180, Rot270, Translate, CropPad };
  Kind kind = HFlip;
  int dx = 0, dy = 0;        // Translate, in cells
  std::size_t crop = 0;      // CropPad window side

  static AugmentOp translate(int dx, int dy) { return {Translate, dx, dy, 0}; }
  static AugmentOp crop_pad(std::size_t side) { return {CropPad, 0, 0, side}; }
};

struct AugmentConfig {
  double probability = 0.5;
  int max_shift = 8;
  std::size_t min_crop = 96;
  std::size_t max_crop = 128;
};

namespace detail {

// Applies out(r, c) = in(src(r, c)) per channel; src returns false for zero fill.
template <class T, class Src>
Tensor<T> remap(const Tensor<T>& in, Src src) {
  const std::size_t C = in.dim(0), S = in.dim(1);
  Tensor<T> out(in.shape());
  for (std::size_t r = 0; r < S; ++r)
    for (std::size_t c = 0; c < S; ++c) {
      std::ptrdiff_t sr, sc;
      if (!src(static_cast<std::ptrdiff_t>(r), static_cast<std::ptrdiff_t>(c), sr, sc)) continue;
      for (std::size_t ch = 0; ch < C; ++ch)
        out.at(ch, r, c) = in.at(ch, static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
    }
  return out;
}

}  // namespace detail

/// Geometric transform applied identically to data and mask.
///   HFlip      out(r, c) = in(r, S-1-c)
///   VFlip      out(r, c) = in(S-1-r, c)
///   Rot90      out(r, c) = in(c, S-1-r), Rot180/Rot270 are its powers
///   Translate  content moves dx columns and dy rows: in(r, c) lands at
///              (r+dy, c+dx). Rows grow northward, so dy > 0 is a shift north.
///   CropPad    keeps a crop x crop window at a seeded offset, zeroes the rest
/// Vacated cells are zero. The valid extent becomes the full patch.
template <class T>
Patch<T> augment(const Patch<T>& patch, const AugmentOp& op, std::uint64_t seed = 0) {
  const std::size_t S = patch.size();
  require_shape(patch.data.dim(1) == patch.data.dim(2), "augment: patch must be square");
  const auto s = static_cast<std::ptrdiff_t>(S);
  std::ptrdiff_t cr0 = 0, cc0 = 0, side = s;
  if (op.kind == AugmentOp::CropPad) {
    side = static_cast<std::ptrdiff_t>(std::min(op.crop, S));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::ptrdiff_t> off(0, s - side);
    cr0 = off(rng);
    cc0 = off(rng);
  }
  auto src = [&](std::ptrdiff_t r, std::ptrdiff_t c, std::ptrdiff_t& sr, std::ptrdiff_t& sc) {
    switch (op.kind) {
      case AugmentOp::HFlip: sr = r; sc = s - 1 - c; return true;
      case AugmentOp::VFlip: sr = s - 1 - r; sc = c; return true;
      case AugmentOp::Rot90: sr = c; sc = s - 1 - r; return true;
      case AugmentOp::Rot180: sr = s - 1 - r; sc = s - 1 - c; return true;
      case AugmentOp::Rot270: sr = s - 1 - c; sc = r; return true;
      case AugmentOp::Translate:
        sr = r - op.dy;
        sc = c - op.dx;
        return sr >= 0 && sc >= 0 && sr < s && sc < s;
      case AugmentOp::CropPad:
        sr = r;
        sc = c;
        return r >= cr0 && r < cr0 + side && c >= cc0 && c < cc0 + side;
    }
    return false;
  };
  Patch<T> out;
  out.row0 = patch.row0;
  out.col0 = patch.col0;
  out.valid_h = out.valid_w = S;
  out.data = detail::remap(patch.data, src);
  if (patch.has_mask()) out.mask = detail::remap(patch.mask, src);
  return out;
}

/// Draws an augmentation pipeline: flips, one rotation, translate and crop
/// are each included with the configured probability.
inline std::vector<AugmentOp> sample_augmentations(std::mt19937_64& rng, const AugmentConfig& cfg = {}) {
  std::bernoulli_distribution coin(cfg.probability);
  std::uniform_int_distribution<int> rot(0, 2), shift(-cfg.max_shift, cfg.max_shift);
  std::uniform_int_distribution<std::size_t> crop(cfg.min_crop, cfg.max_crop);
  std::vector<AugmentOp> ops;
  if (coin(rng)) ops.push_back({AugmentOp::HFlip});
  if (coin(rng)) ops.push_back({AugmentOp::VFlip});
  if (coin(rng)) ops.push_back({static_cast<AugmentOp::Kind>(AugmentOp::Rot90 + rot(rng))});
  if (coin(rng)) {
    const int dx = shift(rng), dy = shift(rng);
    ops.push_back(AugmentOp::translate(dx, dy));
  }
  if (coin(rng)) ops.push_back(AugmentOp::crop_pad(crop(rng)));
  return ops;
}

/// Randomly augmented copy of a training patch, reproducible from `seed`.
template <class T>
Patch<T> random_augment(const Patch<T>& patch, std::uint64_t seed, const AugmentConfig& cfg = {}) {
  std::mt19937_64 rng(seed);
  Patch<T> out = patch;
  for (const AugmentOp& op : sample_augmentations(rng, cfg)) out = augment(out, op, rng());
  return out;
}

}  // namespace alscd
