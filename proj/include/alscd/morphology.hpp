#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "alscd/error.hpp"
#include "alscd/grid.hpp"

namespace alscd {

namespace detail {

// Separable min (erode) or max (dilate) over a k x k square. Cells outside
// the grid count as 0 in both cases.
inline Mask square_filter(const Mask& m, std::size_t k, bool erode) {
  if (k % 2 == 0 || k == 0) throw Error(Errc::BadConfig, "structuring element size must be odd, got " + std::to_string(k));
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
  const auto W = static_cast<std::ptrdiff_t>(m.width), H = static_cast<std::ptrdiff_t>(m.height);
  auto pass = [&](const Mask& in, bool horizontal) {
    Mask out(in.width, in.height);
    for (std::ptrdiff_t y = 0; y < H; ++y)
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        bool acc = erode;
        for (std::ptrdiff_t d = -r; d <= r; ++d) {
          const std::ptrdiff_t xx = horizontal ? x + d : x, yy = horizontal ? y : y + d;
          const bool inside = xx >= 0 && yy >= 0 && xx < W && yy < H;
          const bool v = inside && in.data[static_cast<std::size_t>(yy * W + xx)] != 0;
          acc = erode ? (acc && v) : (acc || v);
        }
        out.data[static_cast<std::size_t>(y * W + x)] = acc ? 1 : 0;
      }
    return out;
  };
  return pass(pass(m, true), false);
}

}  // namespace detail

inline Mask erode(const Mask& m, std::size_t k = 3) { return detail::square_filter(m, k, true); }
inline Mask dilate(const Mask& m, std::size_t k = 3) { return detail::square_filter(m, k, false); }
inline Mask open(const Mask& m, std::size_t k = 3) { return dilate(erode(m, k), k); }

/// Closing of the mask as a subset of the unbounded plane (outside = 0),
/// restricted to the grid. Computed on a copy padded by k/2 so the
/// dilation can spill past the border before eroding; this keeps
/// m <= close(m) on border cells too.
inline Mask close(const Mask& m, std::size_t k = 3) {
  const std::size_t r = k / 2;
  Mask padded(m.width + 2 * r, m.height + 2 * r);
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) padded(x + r, y + r) = m(x, y);
  const Mask c = erode(dilate(padded, k), k);
  Mask out(m.width, m.height);
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) out(x, y) = c(x + r, y + r);
  return out;
}

/// Connected components of nonzero cells. Labels start at 1 in row-major
/// discovery order; background is 0.
struct Components {
  Grid<std::int32_t> label;
  std::int32_t count = 0;
  std::vector<std::size_t> sizes;  // sizes[i] is the cell count of label i+1
};

template <class Pred>
Components connected_components(std::size_t width, std::size_t height, Pred member, int connectivity = 8) {
  if (connectivity != 4 && connectivity != 8)
    throw Error(Errc::BadConfig, "connectivity must be 4 or 8, got " + std::to_string(connectivity));
  Components c;
  c.label = Grid<std::int32_t>(width, height);
  const auto W = static_cast<std::ptrdiff_t>(width), H = static_cast<std::ptrdiff_t>(height);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < width * height; ++start) {
    if (c.label[start] || !member(start)) continue;
    const std::int32_t id = ++c.count;
    std::size_t size = 0;
    c.label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const auto y = static_cast<std::ptrdiff_t>(i) / W, x = static_cast<std::ptrdiff_t>(i) % W;
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          if ((!dx && !dy) || (connectivity == 4 && dx && dy)) continue;
          const std::ptrdiff_t xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= W || yy >= H) continue;
          const auto j = static_cast<std::size_t>(yy * W + xx);
          if (c.label[j] || !member(j)) continue;
          c.label[j] = id;
          stack.push_back(j);
        }
    }
    c.sizes.push_back(size);
  }
  return c;
}

inline Components connected_components(const Mask& m, int connectivity = 8) {
  return connected_components(m.width, m.height, [&](std::size_t i) { return m[i] != 0; }, connectivity);
}

/// Drops components smaller than min_cells.
inline Mask remove_small_components(const Mask& m, std::size_t min_cells, int connectivity = 8) {
  if (min_cells <= 1) return m;
  const Components c = connected_components(m, connectivity);
  Mask out(m.width, m.height);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (c.label[i] && c.sizes[static_cast<std::size_t>(c.label[i] - 1)] >= min_cells) out[i] = 1;
  return out;
}

}  // namespace alscd
