#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace alscd::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t reprobed = 0;  // coordinates that needed a smaller step
};

/// Compares `analytic` against central differences of `loss` with respect to
/// the values in `x` (perturbed in place, restored afterwards). Checks every
/// coordinate when there are at most `min_coords`, otherwise a random subset
/// of that size.
///
/// relative error = |a - n| / max(|a|, |n|, 1e-8)
///
/// Piecewise-linear layers (ReLU, max-pool) make the loss non-smooth: a step
/// that crosses a switch point gives a wrong central difference even for a
/// correct gradient. A coordinate whose error exceeds `reprobe_above` is
/// probed again with steps eps/10 and eps/100 and keeps the smallest error.
inline GradCheckResult grad_check(const std::function<double()>& loss, std::span<double> x,
                                  std::span<const double> analytic, double eps = 1e-5,
                                  std::size_t min_coords = 100, std::uint64_t seed = 0,
                                  double reprobe_above = 1e-4) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (idx.size() > min_coords) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(min_coords);
  }
  GradCheckResult r;
  auto error_at = [&](std::size_t i, double h) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = loss();
    x[i] = saved - h;
    const double down = loss();
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[i];
    return std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
  };
  for (std::size_t i : idx) {
    double err = error_at(i, eps);
    if (err > reprobe_above) {
      ++r.reprobed;
      err = std::min({err, error_at(i, eps / 10), error_at(i, eps / 100)});
    }
    r.max_rel_error = std::max(r.max_rel_error, err);
    ++r.coords_checked;
  }
  return r;
}

}  // namespace alscd::nn
