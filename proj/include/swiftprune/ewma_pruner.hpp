#pragma once

// Single-pass streaming pruner. Each row is walked left to right; the
// contribution score L_i of every weight is compared against a threshold
// est - la * dev built from exponentially weighted estimates of the mean and
// mean absolute deviation of the scores seen so far. No sort, O(n) per row.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "swiftprune/metrics.hpp"
#include "swiftprune/report.hpp"
#include "swiftprune/tensor_io.hpp"

namespace swiftprune {

struct EwmaParams {
  double alpha = 0.125;
  double beta = 0.125;
  double la = 4.0;  // may be negative; smaller prunes more

  /// alpha, beta in (0,1) and la finite, else a range error.
  void validate() const;

  static EwmaParams from(const RunConfig& cfg) { return {cfg.alpha, cfg.beta, cfg.la}; }
};

/// Per-row streaming state.
struct TensorState {
  double S = 0.0;        // running sum-of-squares pool, shrinks on prune
  double est = 0.0;      // EWMA mean of L; unread until started
  double dev = 0.0;      // EWMA mean absolute deviation of L
  bool started = false;
  double s_floor = 0.0;  // S never drops below this (1e-12 * S0)
};

enum class Decision { keep, prune };

struct StepOutcome {
  TensorState state;
  Decision decision = Decision::keep;
  double score = 0.0;      // L_i, +inf when the denominator guard fired
  bool guarded = false;    // guarded weights are kept and do not feed est/dev
  bool s_clamped = false;  // the prune would have pushed S below its floor
};

inline constexpr double kSFloorFraction = 1e-12;

TensorState init_state(const RowContext& ctx);

/// One step of the streaming rule:
///   L = 0.5 w^2 / (1 - x^2 / S)
///   first step: est = L
///   prune iff L < est - la * dev          (pre-update est/dev, strict)
///   on prune:   S -= w^2                   (unless update_s is off)
///   est = (1 - alpha) est + alpha L
///   dev = (1 - beta) dev + beta |est - L|  (with the updated est)
/// Throws a numerical error if L is non-finite while the denominator is fine.
StepOutcome ewma_step(const TensorState& state, double w, double x, const EwmaParams& p, bool update_s = true);

struct EwmaOptions {
  bool update_s = true;
  bool record_trace = false;
};

struct RowResult {
  std::vector<double> kept_weights;      // pruned positions zeroed, others untouched
  std::vector<std::uint8_t> mask_row;    // 1 = kept
  std::size_t pruned_count = 0;
  std::size_t guarded_count = 0;
  bool s_clamped = false;
  std::optional<std::vector<TraceRecord>> trace;  // est/dev recorded after each step
};

RowResult prune_row(std::span<const double> w_row, const RowContext& ctx, const EwmaParams& p,
                    const EwmaOptions& options = {}, std::size_t row_index = 0);

/// la for a target sparsity in [0.5, 0.9]: the calibrated anchors
/// {0.5: 0.5, 0.6: 0.2, 0.7: -0.2, 0.8: -0.9, 0.9: -1.5}, linear in between.
/// Targets outside that span are a range error; pass la directly instead.
double la_for_sparsity(double target);

/// Prunes every row independently with its own TensorState. Output is
/// bit-identical for any worker count.
PruneOutcome prune_matrix(const MatrixBuffer& W, const RowContext& ctx, const EwmaParams& p, std::size_t workers = 1,
                          const EwmaOptions& options = {});

}  // namespace swiftprune
