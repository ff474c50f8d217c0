#include "swiftprune/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "swiftprune/errors.hpp"
#include "swiftprune/kernels.hpp"

namespace swiftprune {

namespace {

#if defined(__SIZEOF_FLOAT128__)
using wide_real = __float128;
#else
using wide_real = long double;
#endif

void check_index(const RowContext& ctx, std::size_t q) {
  if (q >= ctx.n()) {
    throw Error(ErrorKind::range, "index " + std::to_string(q) + " out of range for n = " + std::to_string(ctx.n()));
  }
}

}  // namespace

RowContext::RowContext(std::vector<double> x) : x_(std::move(x)), s0_(0.0) {
  if (x_.empty()) throw Error(ErrorKind::domain, "calibration vector is empty");
  for (double v : x_) {
    if (!std::isfinite(v)) throw Error(ErrorKind::data, "calibration vector has a non-finite element");
  }
  s0_ = kernels::sum_squares(x_);
  if (!(s0_ > 0.0)) throw Error(ErrorKind::domain, "calibration vector has zero energy (S0 = 0)");
}

ContributionScore contribution(double w_q, double x_q, double S) {
  if (!(S > 0.0)) throw Error(ErrorKind::domain, "contribution needs S > 0, got " + format_real(S));
  // Same operation order as the score kernels so batch and single scores agree bit-for-bit.
  const double denom = 1.0 - (x_q * x_q) / S;
  if (!(denom > kernels::kDenominatorEpsilon)) return {std::numeric_limits<double>::infinity(), false};
  return {(0.5 * (w_q * w_q)) / denom, true};
}

double hqq_inv_closed(const RowContext& ctx, std::size_t q) {
  check_index(ctx, q);
  const double n = static_cast<double>(ctx.n());
  const double S = ctx.s0();
  const double xq2 = ctx.x_at(q) * ctx.x_at(q);
  return (S / n + S - xq2) / ((2.0 * S / n) * (S / n + S));
}

HessianProbe build_hessian(const RowContext& ctx, std::size_t max_n) {
  const std::size_t n = ctx.n();
  if (n > max_n) {
    throw Error(ErrorKind::range, "oracle size cap is " + std::to_string(max_n) + ", row has n = " + std::to_string(n));
  }
  HessianProbe probe{n, ctx.s0(), std::vector<double>(n * n)};
  const auto x = ctx.x();
  const double damp = 2.0 * ctx.s0() / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) probe.H[i * n + j] = 2.0 * x[i] * x[j];
    probe.H[i * n + i] += damp;
  }
  return probe;
}

namespace {

// Lower-triangular Cholesky factor, row-major.
std::vector<double> cholesky(std::span<const double> a, std::size_t n) {
  std::vector<double> l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= l[j * n + k] * l[j * n + k];
    if (!(d > 0.0)) throw Error(ErrorKind::numerical, "matrix is not positive definite at pivot " + std::to_string(j));
    const double ljj = std::sqrt(d);
    l[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = s / ljj;
    }
  }
  return l;
}

}  // namespace

std::vector<double> invert_spd(std::span<const double> a, std::size_t n) {
  if (a.size() != n * n) throw Error(ErrorKind::dimension, "invert_spd: matrix is not n x n");
  const auto l = cholesky(a, n);

  // Forward substitution for L^{-1}, column by column.
  std::vector<double> linv(n * n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    linv[c * n + c] = 1.0 / l[c * n + c];
    for (std::size_t i = c + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = c; k < i; ++k) s -= l[i * n + k] * linv[k * n + c];
      linv[i * n + c] = s / l[i * n + i];
    }
  }

  // A^{-1} = L^{-T} L^{-1}
  std::vector<double> inv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = i; k < n; ++k) s += linv[k * n + i] * linv[k * n + j];
      inv[i * n + j] = s;
      inv[j * n + i] = s;
    }
  }
  return inv;
}

double determinant_spd(std::span<const double> a, std::size_t n) {
  if (a.size() != n * n) throw Error(ErrorKind::dimension, "determinant_spd: matrix is not n x n");
  const auto l = cholesky(a, n);
  double det = 1.0;
  for (std::size_t i = 0; i < n; ++i) det *= l[i * n + i] * l[i * n + i];
  return det;
}

double hessian_determinant_closed(const RowContext& ctx) {
  const double n = static_cast<double>(ctx.n());
  const double S = ctx.s0();
  return 2.0 * std::pow(2.0 * S / n, n - 1.0) * (S / n + S);
}

double hessian_cofactor_closed(const RowContext& ctx, std::size_t q) {
  check_index(ctx, q);
  const double n = static_cast<double>(ctx.n());
  const double S = ctx.s0();
  return 2.0 * std::pow(2.0 * S / n, n - 2.0) * (S / n + S - ctx.x_at(q) * ctx.x_at(q));
}

double hqq_inv_brute(const RowContext& ctx, std::size_t q, std::size_t max_n) {
  check_index(ctx, q);
  return hqq_inv_brute_all(ctx, max_n)[q];
}

std::vector<double> hqq_inv_brute_all(const RowContext& ctx, std::size_t max_n) {
  const auto probe = build_hessian(ctx, max_n);
  const auto inv = invert_spd(probe.H, probe.n);
  std::vector<double> diag(probe.n);
  for (std::size_t i = 0; i < probe.n; ++i) diag[i] = inv[i * probe.n + i];
  return diag;
}

double exact_contribution(double w_q, const RowContext& ctx, std::size_t q) {
  return 0.5 * (w_q * w_q) / hqq_inv_closed(ctx, q);
}

double approximation_deviation(const RowContext& ctx, std::size_t q) {
  check_index(ctx, q);
  const double xq = ctx.x_at(q);
  if (!(ctx.s0() > xq * xq)) throw Error(ErrorKind::domain, "approximation_deviation needs S > x_q^2");
  if (xq == 0.0) return 0.0;

  const wide_real n = static_cast<wide_real>(ctx.n());
  const wide_real S = ctx.s0();
  const wide_real xq2 = static_cast<wide_real>(xq) * static_cast<wide_real>(xq);
  const wide_real hqq = (S / n + S - xq2) / ((2 * S / n) * (S / n + S));
  const wide_real C = n / (2 * S);
  const wide_real r = (hqq / (1 - xq2 / S)) / C;
  const wide_real dev = r - 1;
  return static_cast<double>(dev < 0 ? -dev : dev);
}

double approximation_deviation_identity(const RowContext& ctx, std::size_t q) {
  check_index(ctx, q);
  const double n = static_cast<double>(ctx.n());
  const double xq2 = ctx.x_at(q) * ctx.x_at(q);
  return xq2 / ((n + 1.0) * (ctx.s0() - xq2));
}

double wanda_score(double w, double x_col_norm) {
  if (x_col_norm < 0.0) throw Error(ErrorKind::domain, "wanda_score needs a non-negative column norm");
  return magnitude_score(w) * x_col_norm;
}

LossProbe row_loss(std::span<const double> w_row, std::span<const double> w_pruned, std::span<const double> x) {
  if (w_row.size() != w_pruned.size() || w_row.size() != x.size()) {
    throw Error(ErrorKind::dimension, "row_loss: length mismatch");
  }
  return {std::fabs(kernels::residual_dot(w_row, w_pruned, x))};
}

double layer_loss(const MatrixBuffer& original, const MatrixBuffer& pruned, const RowContext& ctx) {
  if (original.rows != pruned.rows || original.cols != pruned.cols || original.cols != ctx.n()) {
    throw Error(ErrorKind::dimension, "layer_loss: shape mismatch");
  }
  double total = 0.0;
  for (std::size_t r = 0; r < original.rows; ++r) total += row_loss(original.row(r), pruned.row(r), ctx.x()).E;
  return total;
}

void score_row(MetricKind metric, std::span<const double> w, const RowContext& ctx, std::span<double> out) {
  if (w.size() != ctx.n() || out.size() != w.size()) throw Error(ErrorKind::dimension, "score_row: length mismatch");
  switch (metric) {
    case MetricKind::swiftprune:
      kernels::contribution_scores(w, ctx.x(), ctx.s0(), out);
      return;
    case MetricKind::magnitude:
      kernels::magnitude_scores(w, out);
      return;
    case MetricKind::wanda:
      kernels::wanda_scores(w, ctx.x(), out);
      return;
    case MetricKind::exact:
      for (std::size_t q = 0; q < w.size(); ++q) out[q] = exact_contribution(w[q], ctx, q);
      return;
  }
}

std::vector<double> score_row(MetricKind metric, std::span<const double> w, const RowContext& ctx) {
  std::vector<double> out(w.size());
  score_row(metric, w, ctx, out);
  return out;
}

}  // namespace swiftprune
