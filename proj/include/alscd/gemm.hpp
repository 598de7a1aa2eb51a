#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace alscd::detail {

template <class T>
struct Vec64;
template <>
struct Vec64<float> {
  typedef float type __attribute__((vector_size(64)));
};
template <>
struct Vec64<double> {
  typedef double type __attribute__((vector_size(64)));
};

// x - (+0) is x for every x including -0, and compiles to one broadcast
template <class V, class T>
inline V splat(T x) {
  return x - V{};
}

/// C[M x N] += op(A)[M x K] * op(B)[K x N], all row-major.
///
/// Each output element accumulates its K products one at a time in
/// increasing k, so the result is bitwise identical to a scalar loop
/// `c += a * b` over the same k order under the same contraction policy.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
          const T* B, std::size_t ldb, T* C, std::size_t ldc) {
  using V = typename Vec64<T>::type;
  constexpr std::size_t W = 64 / sizeof(T);
  constexpr std::size_t NV = 2;
  constexpr std::size_t NR = NV * W;
  constexpr std::size_t MR = 8;
  constexpr std::size_t KC = 512;
  if (M == 0 || N == 0 || K == 0) return;

  std::vector<V> bpack(std::min(K, KC) * NV);
  alignas(64) T row[NR];

  for (std::size_t j0 = 0; j0 < N; j0 += NR) {
    const std::size_t nr = std::min(NR, N - j0);
    for (std::size_t k0 = 0; k0 < K; k0 += KC) {
      const std::size_t kc = std::min(KC, K - k0);
      // full-width panels of a row-major B are read in place
      const bool direct = !trans_b && nr == NR;
      const T* bbase = B + k0 * ldb + j0;
      const std::size_t bstride = direct ? ldb : NR;
      if (!direct) {
        for (std::size_t k = 0; k < kc; ++k) {
          std::fill(row, row + NR, T(0));
          if (!trans_b) {
            std::memcpy(row, B + (k0 + k) * ldb + j0, nr * sizeof(T));
          } else {
            for (std::size_t j = 0; j < nr; ++j) row[j] = B[(j0 + j) * ldb + k0 + k];
          }
          std::memcpy(&bpack[k * NV], row, sizeof(row));
        }
        bbase = reinterpret_cast<const T*>(bpack.data());
      }

      for (std::size_t i0 = 0; i0 < M; i0 += MR) {
        const std::size_t mr = std::min(MR, M - i0);
        V acc[MR][NV];
        for (std::size_t r = 0; r < MR; ++r) {
          std::fill(row, row + NR, T(0));
          if (r < mr) std::memcpy(row, C + (i0 + r) * ldc + j0, nr * sizeof(T));
          for (std::size_t v = 0; v < NV; ++v) std::memcpy(&acc[r][v], row + v * W, sizeof(V));
        }
        // rows past mr alias the last real row; their results are discarded
        std::size_t ai[MR];
        for (std::size_t r = 0; r < MR; ++r) ai[r] = i0 + std::min(r, mr - 1);
        if (!trans_a) {
          const T* arow[MR];
          for (std::size_t r = 0; r < MR; ++r) arow[r] = A + ai[r] * lda + k0;
          for (std::size_t k = 0; k < kc; ++k) {
            const T* bk = bbase + k * bstride;
            for (std::size_t r = 0; r < MR; ++r) {
              const V a = splat<V>(arow[r][k]);
              for (std::size_t v = 0; v < NV; ++v) {
                V b;
                std::memcpy(&b, bk + v * W, sizeof(V));
                acc[r][v] += a * b;
              }
            }
          }
        } else {
          for (std::size_t k = 0; k < kc; ++k) {
            const T* bk = bbase + k * bstride;
            const T* acol = A + (k0 + k) * lda;
            for (std::size_t r = 0; r < MR; ++r) {
              const V a = splat<V>(acol[ai[r]]);
              for (std::size_t v = 0; v < NV; ++v) {
                V b;
                std::memcpy(&b, bk + v * W, sizeof(V));
                acc[r][v] += a * b;
              }
            }
          }
        }
        for (std::size_t r = 0; r < mr; ++r) {
          for (std::size_t v = 0; v < NV; ++v) std::memcpy(row + v * W, &acc[r][v], sizeof(V));
          std::memcpy(C + (i0 + r) * ldc + j0, row, nr * sizeof(T));
        }
      }
    }
  }
}

}  // namespace alscd::detail
