#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "alscd/error.hpp"

namespace alscd {

/// Regular north-up grid. Cell (col c, row r) covers
/// [origin_x + c*s, origin_x + (c+1)*s) x [origin_y + r*s, origin_y + (r+1)*s),
/// so row 0 is the southernmost row.
struct GridSpec {
  double origin_x = 0;
  double origin_y = 0;
  double cell_size = 0.5;
  std::size_t width = 1;
  std::size_t height = 1;
  std::string crs_tag;

  void validate() const {
    if (!(cell_size > 0) || !std::isfinite(cell_size)) throw Error(Errc::BadConfig, "cell_size must be > 0");
    if (width < 1 || height < 1) throw Error(Errc::BadConfig, "grid width and height must be >= 1");
    if (!std::isfinite(origin_x) || !std::isfinite(origin_y)) throw Error(Errc::BadConfig, "grid origin must be finite");
  }

  std::size_t cells() const noexcept { return width * height; }
  std::size_t index(std::size_t col, std::size_t row) const noexcept { return row * width + col; }

  std::optional<std::pair<std::size_t, std::size_t>> cell_of(double x, double y) const noexcept {
    const double fc = std::floor((x - origin_x) / cell_size);
    const double fr = std::floor((y - origin_y) / cell_size);
    if (!(fc >= 0 && fr >= 0 && fc < static_cast<double>(width) && fr < static_cast<double>(height))) return std::nullopt;
    return std::pair{static_cast<std::size_t>(fc), static_cast<std::size_t>(fr)};
  }

  double center_x(std::size_t col) const noexcept { return origin_x + (static_cast<double>(col) + 0.5) * cell_size; }
  double center_y(std::size_t row) const noexcept { return origin_y + (static_cast<double>(row) + 0.5) * cell_size; }
  double max_x() const noexcept { return origin_x + static_cast<double>(width) * cell_size; }
  double max_y() const noexcept { return origin_y + static_cast<double>(height) * cell_size; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

inline void require_same_spec(const GridSpec& a, const GridSpec& b, const std::string& what) {
  if (!(a == b)) throw Error(Errc::SpecMismatch, what + ": grid specs differ");
}

/// Row-major cell array over a GridSpec's width x height.
template <class T>
struct Grid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(std::size_t w, std::size_t h, T fill = T{}) : width(w), height(h), data(w * h, fill) {}
  explicit Grid(const GridSpec& s, T fill = T{}) : Grid(s.width, s.height, fill) {}

  T& operator()(std::size_t col, std::size_t row) noexcept { return data[row * width + col]; }
  const T& operator()(std::size_t col, std::size_t row) const noexcept { return data[row * width + col]; }
  T& operator[](std::size_t i) noexcept { return data[i]; }
  const T& operator[](std::size_t i) const noexcept { return data[i]; }
  std::size_t size() const noexcept { return data.size(); }
  bool same_shape(const GridSpec& s) const noexcept { return width == s.width && height == s.height; }
  template <class U>
  bool same_shape(const Grid<U>& o) const noexcept {
    return width == o.width && height == o.height;
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

using Mask = Grid<std::uint8_t>;

}  // namespace alscd
