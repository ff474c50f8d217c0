#pragma once

// Saliency scores for one weight row against a calibration vector x.
//
// The per-row layerwise Hessian is H = 2 x x^T + (2S/n) I with S = sum x_i^2.
// Its inverse diagonal has a closed form, and the ratio H_qq^{-1} / (1 - x_q^2/S)
// is constant up to x_q^2 / ((n+1)(S - x_q^2)), which is what lets the cheap
// score 0.5 w^2 / (1 - x^2/S) stand in for the exact 0.5 w^2 / H_qq^{-1}.

#include <cstddef>
#include <span>
#include <vector>

#include "swiftprune/tensor_io.hpp"

namespace swiftprune {

/// Calibration vector plus its sum of squares; immutable once built.
class RowContext {
 public:
  /// Throws a domain error for an empty vector or S0 <= 0.
  explicit RowContext(std::vector<double> x);
  explicit RowContext(const VectorBuffer& v) : RowContext(v.data) {}

  std::span<const double> x() const { return x_; }
  double x_at(std::size_t q) const { return x_[q]; }
  double s0() const { return s0_; }
  std::size_t n() const { return x_.size(); }

 private:
  std::vector<double> x_;
  double s0_;
};

struct ContributionScore {
  double value;
  bool well_posed;  // false when the denominator guard fired; value is +inf
};

/// 0.5 w^2 / (1 - x^2/S). Throws a domain error for S <= 0.
ContributionScore contribution(double w_q, double x_q, double S);

/// Closed-form (H^{-1})_qq = (S/n + S - x_q^2) / ((2S/n)(S/n + S)).
double hqq_inv_closed(const RowContext& ctx, std::size_t q);

inline constexpr std::size_t kOracleSizeCap = 256;

/// Dense H = 2 x x^T + (2S/n) I, row-major.
struct HessianProbe {
  std::size_t n = 0;
  double S = 0.0;
  std::vector<double> H;

  double at(std::size_t i, std::size_t j) const { return H[i * n + j]; }
};

/// Throws a range error when n exceeds `max_n`.
HessianProbe build_hessian(const RowContext& ctx, std::size_t max_n = kOracleSizeCap);

/// Full inverse through a Cholesky factorization; throws a numerical error
/// if the matrix is not positive definite to working precision.
std::vector<double> invert_spd(std::span<const double> a, std::size_t n);

/// det(H) from the Cholesky factor.
double determinant_spd(std::span<const double> a, std::size_t n);

/// 2 (2S/n)^{n-1} (S/n + S).
double hessian_determinant_closed(const RowContext& ctx);

/// 2 (2S/n)^{n-2} (S/n + S - x_q^2), the (q,q) cofactor of H.
double hessian_cofactor_closed(const RowContext& ctx, std::size_t q);

/// (H^{-1})_qq by materializing and inverting H. O(n^3).
double hqq_inv_brute(const RowContext& ctx, std::size_t q, std::size_t max_n = kOracleSizeCap);

/// Whole inverse diagonal from one inversion.
std::vector<double> hqq_inv_brute_all(const RowContext& ctx, std::size_t max_n = kOracleSizeCap);

/// 0.5 w^2 / (H^{-1})_qq using the closed form.
double exact_contribution(double w_q, const RowContext& ctx, std::size_t q);

/// |r - 1| with r = [H_qq^{-1} / (1 - x_q^2/S)] / (n / 2S). Evaluated in
/// extended precision since r - 1 cancels. Domain error when S <= x_q^2.
double approximation_deviation(const RowContext& ctx, std::size_t q);

/// x_q^2 / ((n+1)(S - x_q^2)), the value approximation_deviation must match.
double approximation_deviation_identity(const RowContext& ctx, std::size_t q);

inline double magnitude_score(double w) { return w < 0 ? -w : w; }

/// |w| * ||X_j||_2; x_col_norm must be non-negative.
double wanda_score(double w, double x_col_norm);

struct LossProbe {
  double E = 0.0;
};

/// |<w_row - w_pruned, x>|, the per-row term of the layerwise loss.
LossProbe row_loss(std::span<const double> w_row, std::span<const double> w_pruned, std::span<const double> x);

/// Sum of row_loss over all rows.
double layer_loss(const MatrixBuffer& original, const MatrixBuffer& pruned, const RowContext& ctx);

/// Scores a whole row with S held at S0. For `wanda` the column norm of a
/// single calibration vector is |x_j|.
void score_row(MetricKind metric, std::span<const double> w, const RowContext& ctx, std::span<double> out);
std::vector<double> score_row(MetricKind metric, std::span<const double> w, const RowContext& ctx);

}  // namespace swiftprune
