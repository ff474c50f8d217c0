// Compiled with -mavx2 only; callers reach these through kernels::avx2()
// after the runtime CPU check.

#include <immintrin.h>

#include <cmath>
#include <cstdint>
#include <limits>

#include "swiftprune/kernels.hpp"

namespace swiftprune::kernels {

namespace {

constexpr std::size_t kPairwiseBlock = 64;

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

inline __m256d abs_pd(__m256d v) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v); }

double sum_squares_block(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d a = _mm256_loadu_pd(x + i);
    __m256d b = _mm256_loadu_pd(x + i + 4);
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(a, a));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(b, b));
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double sum_squares_avx2(const double* x, std::size_t n) {
  if (n <= kPairwiseBlock) return sum_squares_block(x, n);
  const std::size_t half = (n / 2) & ~std::size_t{7};
  return sum_squares_avx2(x, half) + sum_squares_avx2(x + half, n - half);
}

void contribution_scores_avx2(const double* w, const double* x, std::size_t n, double s, double* out) {
  const __m256d vs = _mm256_set1_pd(s);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d eps = _mm256_set1_pd(kDenominatorEpsilon);
  const __m256d inf = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vw = _mm256_loadu_pd(w + i);
    __m256d vx = _mm256_loadu_pd(x + i);
    __m256d denom = _mm256_sub_pd(one, _mm256_div_pd(_mm256_mul_pd(vx, vx), vs));
    __m256d score = _mm256_div_pd(_mm256_mul_pd(half, _mm256_mul_pd(vw, vw)), denom);
    __m256d ok = _mm256_cmp_pd(denom, eps, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_blendv_pd(inf, score, ok));
  }
  for (; i < n; ++i) {
    const double denom = 1.0 - (x[i] * x[i]) / s;
    out[i] = denom > kDenominatorEpsilon ? (0.5 * (w[i] * w[i])) / denom : std::numeric_limits<double>::infinity();
  }
}

void magnitude_scores_avx2(const double* w, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, abs_pd(_mm256_loadu_pd(w + i)));
  for (; i < n; ++i) out[i] = std::fabs(w[i]);
}

void wanda_scores_avx2(const double* w, const double* x, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d p = _mm256_mul_pd(abs_pd(_mm256_loadu_pd(w + i)), abs_pd(_mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(out + i, p);
  }
  for (; i < n; ++i) out[i] = std::fabs(w[i]) * std::fabs(x[i]);
}

double residual_dot_avx2(const double* w, const double* w_hat, const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(w_hat + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(diff, _mm256_loadu_pd(x + i)));
  }
  double total = hsum(acc);
  for (; i < n; ++i) total += (w[i] - w_hat[i]) * x[i];
  return total;
}

double packed_row_dot_avx2(const double* values, const std::uint8_t* indices, std::size_t kept, std::size_t n_keep,
                           std::size_t m_group, const double* v) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  alignas(16) std::int32_t offsets[4];
  for (; k + 4 <= kept; k += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      offsets[j] = static_cast<std::int32_t>(((k + j) / n_keep) * m_group + indices[k + j]);
    }
    __m128i idx = _mm_load_si128(reinterpret_cast<const __m128i*>(offsets));
    __m256d gathered = _mm256_i32gather_pd(v, idx, 8);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(values + k), gathered));
  }
  double total = hsum(acc);
  for (; k < kept; ++k) total += values[k] * v[(k / n_keep) * m_group + indices[k]];
  return total;
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{
      "avx2",
      sum_squares_avx2,
      contribution_scores_avx2,
      magnitude_scores_avx2,
      wanda_scores_avx2,
      residual_dot_avx2,
      packed_row_dot_avx2,
  };
  return table;
}

}  // namespace swiftprune::kernels
