#include <cmath>
#include <limits>

#include "swiftprune/kernels.hpp"

namespace swiftprune::kernels {

namespace {

constexpr std::size_t kPairwiseBlock = 32;

double sum_squares_scalar(const double* x, std::size_t n) {
  if (n <= kPairwiseBlock) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
  }
  const std::size_t half = n / 2;
  return sum_squares_scalar(x, half) + sum_squares_scalar(x + half, n - half);
}

void contribution_scores_scalar(const double* w, const double* x, std::size_t n, double s, double* out) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double denom = 1.0 - (x[i] * x[i]) / s;
    out[i] = denom > kDenominatorEpsilon ? (0.5 * (w[i] * w[i])) / denom : inf;
  }
}

void magnitude_scores_scalar(const double* w, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(w[i]);
}

void wanda_scores_scalar(const double* w, const double* x, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(w[i]) * std::fabs(x[i]);
}

double residual_dot_scalar(const double* w, const double* w_hat, const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += (w[i] - w_hat[i]) * x[i];
  return acc;
}

double packed_row_dot_scalar(const double* values, const std::uint8_t* indices, std::size_t kept, std::size_t n_keep,
                             std::size_t m_group, const double* v) {
  double acc = 0.0;
  for (std::size_t k = 0; k < kept; ++k) acc += values[k] * v[(k / n_keep) * m_group + indices[k]];
  return acc;
}

}  // namespace

const KernelTable& scalar() {
  static const KernelTable table{
      "scalar",
      sum_squares_scalar,
      contribution_scores_scalar,
      magnitude_scores_scalar,
      wanda_scores_scalar,
      residual_dot_scalar,
      packed_row_dot_scalar,
  };
  return table;
}

}  // namespace swiftprune::kernels
