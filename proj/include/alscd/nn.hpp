#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "alscd/gemm.hpp"
#include "alscd/tensor.hpp"

namespace alscd::nn {

enum class Mode { Train, Infer };
enum class ConvImpl { Naive, Im2col };

namespace detail {

inline void check4(const Shape& s, const char* what) {
  require_shape(s.size() == 4, std::string(what) + ": expected rank-4 tensor, got " + shape_str(s));
}

// col[(c*k + ky)*k + kx][y*W + x] = img[c][y + ky - pad][x + kx - pad], zero outside.
template <class T>
void im2col(const T* img, std::size_t C, std::size_t H, std::size_t W, std::size_t k, T* col) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* dst = col + ((c * k + ky) * k + kx) * H * W;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          T* out = dst + y * W;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) {
            std::fill(out, out + W, T(0));
            continue;
          }
          const T* in = img + (c * H + static_cast<std::size_t>(sy)) * W;
          for (std::size_t x = 0; x < W; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + dx;
            out[x] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) ? T(0) : in[sx];
          }
        }
      }
}

template <class T>
void col2im_add(const T* col, std::size_t C, std::size_t H, std::size_t W, std::size_t k, T* img) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = col + ((c * k + ky) * k + kx) * H * W;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
          T* out = img + (c * H + static_cast<std::size_t>(sy)) * W;
          const T* in = src + y * W;
          for (std::size_t x = 0; x < W; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + dx;
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(W)) out[sx] += in[x];
          }
        }
      }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: square odd kernel, stride 1, zero "same" padding.

template <class T>
void check_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  detail::check4(x.shape(), "conv2d input");
  detail::check4(w.shape(), "conv2d kernel");
  require_shape(w.dim(2) == w.dim(3) && w.dim(2) % 2 == 1, "conv2d: kernel must be square and odd, got " + shape_str(w.shape()));
  require_shape(w.dim(1) == x.dim(1), "conv2d: kernel " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
  require_shape(b.rank() == 1 && b.dim(0) == w.dim(0), "conv2d: bias " + shape_str(b.shape()));
}

/// Reference cross-correlation. Accumulates bias first, then products in
/// (c, ky, kx) order, the same order as the im2col path.
template <class T>
Tensor<T> conv2d_naive(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check_conv2d(x, w, b);
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = w.dim(0), k = w.dim(2);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor<T> y({N, F, H, W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t yy = 0; yy < H; ++yy)
        for (std::size_t xx = 0; xx < W; ++xx) {
          T acc = b[f];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(yy + ky) - pad;
                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - pad;
                const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(H) && sx < static_cast<std::ptrdiff_t>(W);
                const T v = inside ? x.at(n, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) : T(0);
                acc += w.at(f, c, ky, kx) * v;
              }
          y.at(n, f, yy, xx) = acc;
        }
  return y;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, ConvImpl impl = ConvImpl::Im2col) {
  if (impl == ConvImpl::Naive) return conv2d_naive(x, w, b);
  check_conv2d(x, w, b);
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = w.dim(0), k = w.dim(2);
  const std::size_t K = C * k * k, P = H * W;
  Tensor<T> y({N, F, H, W});
  std::vector<T> col(k == 1 ? 0 : K * P);
  for (std::size_t n = 0; n < N; ++n) {
    const T* xn = x.data() + n * C * P;
    T* yn = y.data() + n * F * P;
    for (std::size_t f = 0; f < F; ++f) std::fill(yn + f * P, yn + (f + 1) * P, b[f]);
    const T* src = xn;
    if (k != 1) {
      detail::im2col(xn, C, H, W, k, col.data());
      src = col.data();
    }
    alscd::detail::gemm<T>(false, false, F, P, K, w.data(), K, src, P, yn, P);
  }
  return y;
}

/// Accumulates into dw/db; writes dx when non-null.
template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>& dw,
                     Tensor<T>& db) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = w.dim(0), k = w.dim(2);
  const std::size_t K = C * k * k, P = H * W;
  require_shape(dy.shape() == Shape({N, F, H, W}), "conv2d backward: upstream " + shape_str(dy.shape()));
  require_shape(dw.shape() == w.shape() && db.size() == F, "conv2d backward: gradient buffers");
  if (dx) *dx = Tensor<T>(x.shape());
  std::vector<T> col(k == 1 ? 0 : K * P);
  std::vector<T> dcol(dx && k != 1 ? K * P : 0);
  for (std::size_t n = 0; n < N; ++n) {
    const T* xn = x.data() + n * C * P;
    const T* dyn = dy.data() + n * F * P;
    for (std::size_t f = 0; f < F; ++f) {
      T s = 0;
      for (std::size_t p = 0; p < P; ++p) s += dyn[p + f * P];
      db[f] += s;
    }
    const T* src = xn;
    if (k != 1) {
      detail::im2col(xn, C, H, W, k, col.data());
      src = col.data();
    }
    alscd::detail::gemm<T>(false, true, F, K, P, dyn, P, src, P, dw.data(), K);
    if (dx) {
      T* dxn = dx->data() + n * C * P;
      if (k == 1) {
        alscd::detail::gemm<T>(true, false, K, P, F, w.data(), K, dyn, P, dxn, P);
      } else {
        std::fill(dcol.begin(), dcol.end(), T(0));
        alscd::detail::gemm<T>(true, false, K, P, F, w.data(), K, dyn, P, dcol.data(), P);
        detail::col2im_add(dcol.data(), C, H, W, k, dxn);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// conv_transpose2d: kernel C x F x 2 x 2, stride 2, output exactly doubles.

template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  detail::check4(x.shape(), "conv_transpose2d input");
  detail::check4(w.shape(), "conv_transpose2d kernel");
  require_shape(w.dim(0) == x.dim(1) && w.dim(2) == 2 && w.dim(3) == 2,
                "conv_transpose2d: kernel " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
  require_shape(b.rank() == 1 && b.dim(0) == w.dim(1), "conv_transpose2d: bias " + shape_str(b.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = w.dim(1);
  const std::size_t P = H * W, F4 = F * 4;
  Tensor<T> y({N, F, 2 * H, 2 * W});
  std::vector<T> ycol(F4 * P);
  for (std::size_t n = 0; n < N; ++n) {
    std::fill(ycol.begin(), ycol.end(), T(0));
    alscd::detail::gemm<T>(true, false, F4, P, C, w.data(), F4, x.data() + n * C * P, P, ycol.data(), P);
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t bb = 0; bb < 2; ++bb) {
          const T* src = ycol.data() + (f * 4 + a * 2 + bb) * P;
          for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) y.at(n, f, 2 * i + a, 2 * j + bb) = src[i * W + j] + b[f];
        }
  }
  return y;
}

template <class T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Tensor<T>* dx,
                               Tensor<T>& dw, Tensor<T>& db) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = w.dim(1);
  const std::size_t P = H * W, F4 = F * 4;
  require_shape(dy.shape() == Shape({N, F, 2 * H, 2 * W}), "conv_transpose2d backward: upstream " + shape_str(dy.shape()));
  if (dx) *dx = Tensor<T>(x.shape());
  std::vector<T> dycol(F4 * P);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t f = 0; f < F; ++f) {
      T s = 0;
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t bb = 0; bb < 2; ++bb) {
          T* dst = dycol.data() + (f * 4 + a * 2 + bb) * P;
          for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) dst[i * W + j] = dy.at(n, f, 2 * i + a, 2 * j + bb);
        }
      const T* plane = dy.data() + (n * F + f) * 4 * P;
      for (std::size_t p = 0; p < 4 * P; ++p) s += plane[p];
      db[f] += s;
    }
    const T* xn = x.data() + n * C * P;
    if (dx) alscd::detail::gemm<T>(false, false, C, P, F4, w.data(), F4, dycol.data(), P, dx->data() + n * C * P, P);
    alscd::detail::gemm<T>(false, true, C, F4, P, xn, P, dycol.data(), P, dw.data(), F4);
  }
}

// ---------------------------------------------------------------------------
// batchnorm over N, H, W per channel.

inline constexpr double kBatchNormEps = 1e-5;

template <class T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<T> inv_std;
};

template <class T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                    Tensor<T>& running_var, Mode mode, BatchNormCache<T>* cache = nullptr, double momentum = 0.9) {
  detail::check4(x.shape(), "batchnorm input");
  const std::size_t N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  require_shape(gamma.size() == C && beta.size() == C && running_mean.size() == C && running_var.size() == C,
                "batchnorm: parameter length vs channels " + std::to_string(C));
  Tensor<T> y(x.shape());
  if (cache) {
    cache->xhat = Tensor<T>(x.shape());
    cache->inv_std.assign(C, T(0));
  }
  const std::size_t m = N * P;
  if (mode == Mode::Train && m < 2)
    throw Error(Errc::DegenerateBatch, "batchnorm needs at least 2 values per channel, got " + std::to_string(m));
  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double s = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = x.data() + (n * C + c) * P;
        for (std::size_t i = 0; i < P; ++i) s += p[i];
      }
      mean = s / static_cast<double>(m);
      double ss = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = x.data() + (n * C + c) * P;
        for (std::size_t i = 0; i < P; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / static_cast<double>(m);
      running_mean[c] = static_cast<T>(momentum * running_mean[c] + (1.0 - momentum) * mean);
      running_var[c] = static_cast<T>(momentum * running_var[c] + (1.0 - momentum) * var);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double inv = 1.0 / std::sqrt(var + kBatchNormEps);
    const T g = gamma[c], bt = beta[c];
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.data() + (n * C + c) * P;
      T* q = y.data() + (n * C + c) * P;
      T* h = cache ? cache->xhat.data() + (n * C + c) * P : nullptr;
      for (std::size_t i = 0; i < P; ++i) {
        const T xh = static_cast<T>((p[i] - mean) * inv);
        if (h) h[i] = xh;
        q[i] = g * xh + bt;
      }
    }
    if (cache) cache->inv_std[c] = static_cast<T>(inv);
  }
  return y;
}

/// Backward of the train-mode transform.
template <class T>
Tensor<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma, const Tensor<T>& dy,
                             Tensor<T>& dgamma, Tensor<T>& dbeta) {
  const Shape& s = cache.xhat.shape();
  require_shape(dy.shape() == s, "batchnorm backward: upstream " + shape_str(dy.shape()));
  const std::size_t N = s[0], C = s[1], P = s[2] * s[3];
  const double m = static_cast<double>(N * P);
  Tensor<T> dx(s);
  for (std::size_t c = 0; c < C; ++c) {
    double sdy = 0, sdyx = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* g = dy.data() + (n * C + c) * P;
      const T* h = cache.xhat.data() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) {
        sdy += g[i];
        sdyx += static_cast<double>(g[i]) * h[i];
      }
    }
    dgamma[c] += static_cast<T>(sdyx);
    dbeta[c] += static_cast<T>(sdy);
    const double scale = static_cast<double>(gamma[c]) * cache.inv_std[c] / m;
    for (std::size_t n = 0; n < N; ++n) {
      const T* g = dy.data() + (n * C + c) * P;
      const T* h = cache.xhat.data() + (n * C + c) * P;
      T* d = dx.data() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) d[i] = static_cast<T>(scale * (m * g[i] - sdy - h[i] * sdyx));
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// activations

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <class T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
  return y;
}

/// Takes the forward output, not the input.
template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2

template <class T>
Tensor<T> maxpool2(const Tensor<T>& x, std::vector<std::uint8_t>* argmax = nullptr) {
  detail::check4(x.shape(), "maxpool2 input");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw Error(Errc::OddDimension, "maxpool2 needs even H and W, got " + shape_str(x.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor<T> y({N, C, Ho, Wo});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* p = x.data() + nc * H * W;
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j, ++o) {
        const T v[4] = {p[2 * i * W + 2 * j], p[2 * i * W + 2 * j + 1], p[(2 * i + 1) * W + 2 * j],
                        p[(2 * i + 1) * W + 2 * j + 1]};
        std::uint8_t best = 0;
        for (std::uint8_t q = 1; q < 4; ++q)
          if (v[q] > v[best]) best = q;
        y[o] = v[best];
        if (argmax) (*argmax)[o] = best;
      }
  }
  return y;
}

template <class T>
Tensor<T> maxpool2_backward(const Shape& input_shape, const std::vector<std::uint8_t>& argmax, const Tensor<T>& dy) {
  Tensor<T> dx(input_shape);
  const std::size_t H = input_shape[2], W = input_shape[3], Ho = H / 2, Wo = W / 2;
  require_shape(dy.size() == argmax.size(), "maxpool2 backward: upstream " + shape_str(dy.shape()));
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < input_shape[0] * input_shape[1]; ++nc) {
    T* p = dx.data() + nc * H * W;
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j, ++o) {
        const std::uint8_t q = argmax[o];
        p[(2 * i + q / 2) * W + 2 * j + q % 2] += dy[o];
      }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// channel concatenation

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check4(a.shape(), "concat a");
  detail::check4(b.shape(), "concat b");
  require_shape(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
                "concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t N = a.dim(0), C1 = a.dim(1), C2 = b.dim(1), P = a.dim(2) * a.dim(3);
  Tensor<T> y({N, C1 + C2, a.dim(2), a.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(a.data() + n * C1 * P, C1 * P, y.data() + n * (C1 + C2) * P);
    std::copy_n(b.data() + n * C2 * P, C2 * P, y.data() + (n * (C1 + C2) + C1) * P);
  }
  return y;
}

/// Inverse of concat_channels: channels [0, c1) and [c1, C).
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& y, std::size_t c1) {
  detail::check4(y.shape(), "split input");
  require_shape(c1 <= y.dim(1), "split_channels: split point past channel count");
  const std::size_t N = y.dim(0), C = y.dim(1), C2 = C - c1, P = y.dim(2) * y.dim(3);
  Tensor<T> a({N, c1, y.dim(2), y.dim(3)}), b({N, C2, y.dim(2), y.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(y.data() + n * C * P, c1 * P, a.data() + n * c1 * P);
    std::copy_n(y.data() + (n * C + c1) * P, C2 * P, b.data() + n * C2 * P);
  }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// loss and optimizer

inline constexpr double kBceClamp = 1e-7;

template <class T>
struct LossResult {
  double loss;
  Tensor<T> grad;
};

/// Mean binary cross-entropy with p clamped to [1e-7, 1 - 1e-7]. The
/// gradient is that of the clamped function: zero where the clamp is active.
template <class T>
LossResult<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_shape(pred.shape() == target.shape(),
                "bce_loss: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  const double n = static_cast<double>(pred.size());
  LossResult<T> r{0.0, Tensor<T>(pred.shape())};
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i], t = target[i];
    const bool clamped = p < kBceClamp || p > 1.0 - kBceClamp;
    const double pc = std::clamp(p, kBceClamp, 1.0 - kBceClamp);
    sum += -(t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc));
    r.grad[i] = clamped ? T(0) : static_cast<T>((-t / pc + (1.0 - t) / (1.0 - pc)) / n);
  }
  r.loss = sum / n;
  return r;
}

struct Hyperparams {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 4;
  std::size_t epochs = 150;
  std::size_t plateau_patience = 20;
  double lr_decay = 0.1;
  double plateau_min_delta = 1e-4;
};

template <class T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update at learning rate `lr`.
template <class T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads, AdamState<T>& state,
               const Hyperparams& hp, double lr) {
  require_shape(params.size() == grads.size(), "adam_step: params/grads count");
  if (state.m.empty()) {
    for (const Tensor<T>* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  require_shape(state.m.size() == params.size(), "adam_step: state size");
  ++state.t;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    const Tensor<T>& g = *grads[i];
    require_shape(p.shape() == g.shape() && state.m[i].shape() == p.shape(),
                  "adam_step: parameter " + std::to_string(i) + " shape " + shape_str(p.shape()));
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const double mhat = m[j] / bc1, vhat = v[j] / bc2;
      p[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + hp.eps));
    }
  }
}

}  // namespace alscd::nn
