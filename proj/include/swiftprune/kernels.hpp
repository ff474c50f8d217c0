#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference in
// kernels_scalar.cpp; kernels_avx2.cpp provides 256-bit variants. The table
// used by the rest of the library is chosen once per process from the CPU
// feature flags (SWIFTPRUNE_KERNELS=scalar forces the reference path).
//
// Elementwise kernels are bit-identical across variants. Reductions use a
// different association order and agree to a few ulps.

#include <cstddef>
#include <cstdint>
#include <span>

namespace swiftprune::kernels {

/// Contribution scores with 1 - x^2/S at or below this are not well posed.
inline constexpr double kDenominatorEpsilon = 1e-12;

struct KernelTable {
  const char* name;

  /// Pairwise sum of x[i]^2.
  double (*sum_squares)(const double* x, std::size_t n);

  /// out[i] = 0.5 * w[i]^2 / (1 - x[i]^2 / s), or +inf when the denominator
  /// is <= kDenominatorEpsilon.
  void (*contribution_scores)(const double* w, const double* x, std::size_t n, double s, double* out);

  /// out[i] = |w[i]|
  void (*magnitude_scores)(const double* w, std::size_t n, double* out);

  /// out[i] = |w[i]| * |x[i]|
  void (*wanda_scores)(const double* w, const double* x, std::size_t n, double* out);

  /// sum_i (w[i] - w_hat[i]) * x[i]
  double (*residual_dot)(const double* w, const double* w_hat, const double* x, std::size_t n);

  /// Dot product of one packed N:M row with v: kept value k sits in group
  /// k / n_keep at within-group position indices[k].
  double (*packed_row_dot)(const double* values, const std::uint8_t* indices, std::size_t kept, std::size_t n_keep,
                           std::size_t m_group, const double* v);
};

const KernelTable& scalar();

/// nullptr when the build lacks AVX2 code or the CPU does not report AVX2.
const KernelTable* avx2();

/// Table selected for this process.
const KernelTable& active();

// Span conveniences over active().
double sum_squares(std::span<const double> x);
void contribution_scores(std::span<const double> w, std::span<const double> x, double s, std::span<double> out);
void magnitude_scores(std::span<const double> w, std::span<double> out);
void wanda_scores(std::span<const double> w, std::span<const double> x, std::span<double> out);
double residual_dot(std::span<const double> w, std::span<const double> w_hat, std::span<const double> x);

}  // namespace swiftprune::kernels
