#include "swiftprune/ewma_pruner.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <string>
#include <utility>

#include "parallel.hpp"
#include "swiftprune/errors.hpp"

namespace swiftprune {

void EwmaParams::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::range, "alpha must lie in (0,1)");
  if (!(beta > 0.0 && beta < 1.0)) throw Error(ErrorKind::range, "beta must lie in (0,1)");
  if (!std::isfinite(la)) throw Error(ErrorKind::range, "la must be finite");
}

TensorState init_state(const RowContext& ctx) {
  TensorState s;
  s.S = ctx.s0();
  s.s_floor = kSFloorFraction * ctx.s0();
  return s;
}

StepOutcome ewma_step(const TensorState& state, double w, double x, const EwmaParams& p, bool update_s) {
  StepOutcome out{state};
  const auto score = contribution(w, x, state.S);
  out.score = score.value;
  if (!score.well_posed) {
    out.guarded = true;
    return out;
  }
  if (!std::isfinite(score.value)) {
    throw Error(ErrorKind::numerical, "non-finite contribution score for w = " + format_real(w));
  }
  const double L = score.value;

  TensorState& s = out.state;
  if (!s.started) {
    s.est = L;
    s.started = true;
  }
  if (L < s.est - p.la * s.dev) {
    out.decision = Decision::prune;
    if (update_s) {
      const double next = s.S - w * w;
      if (next <= s.s_floor) {
        s.S = s.s_floor;
        out.s_clamped = true;
      } else {
        s.S = next;
      }
    }
  }
  s.est = (1.0 - p.alpha) * s.est + p.alpha * L;
  s.dev = (1.0 - p.beta) * s.dev + p.beta * std::fabs(s.est - L);
  return out;
}

namespace {

// Shared by prune_row and prune_matrix; writes straight into the output spans.
struct RowCounters {
  std::size_t pruned = 0;
  std::size_t guarded = 0;
  bool s_clamped = false;
};

RowCounters run_row(std::span<const double> w, const RowContext& ctx, const EwmaParams& p, bool update_s,
                    std::span<double> kept, std::span<std::uint8_t> mask, std::vector<TraceRecord>* trace,
                    std::size_t row_index) {
  if (w.size() != ctx.n()) {
    throw Error(ErrorKind::dimension, "row has " + std::to_string(w.size()) + " weights, calibration has " +
                                          std::to_string(ctx.n()));
  }
  const auto x = ctx.x();
  TensorState state = init_state(ctx);
  RowCounters c;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto step = ewma_step(state, w[i], x[i], p, update_s);
    state = step.state;
    const bool pruned = step.decision == Decision::prune;
    kept[i] = pruned ? 0.0 : w[i];
    mask[i] = pruned ? 0 : 1;
    c.pruned += pruned ? 1 : 0;
    c.guarded += step.guarded ? 1 : 0;
    c.s_clamped = c.s_clamped || step.s_clamped;
    if (trace != nullptr) trace->push_back({row_index, i, step.score, state.est, state.dev, pruned});
  }
  return c;
}

}  // namespace

RowResult prune_row(std::span<const double> w_row, const RowContext& ctx, const EwmaParams& p,
                    const EwmaOptions& options, std::size_t row_index) {
  p.validate();
  RowResult result;
  result.kept_weights.resize(w_row.size());
  result.mask_row.resize(w_row.size());
  std::vector<TraceRecord> trace;
  const auto c = run_row(w_row, ctx, p, options.update_s, result.kept_weights, result.mask_row,
                         options.record_trace ? &trace : nullptr, row_index);
  result.pruned_count = c.pruned;
  result.guarded_count = c.guarded;
  result.s_clamped = c.s_clamped;
  if (options.record_trace) result.trace = std::move(trace);
  return result;
}

double la_for_sparsity(double target) {
  static constexpr std::array<std::pair<double, double>, 5> anchors{{
      {0.5, 0.5},
      {0.6, 0.2},
      {0.7, -0.2},
      {0.8, -0.9},
      {0.9, -1.5},
  }};
  if (!(target >= anchors.front().first && target <= anchors.back().first)) {
    throw Error(ErrorKind::range, "no calibrated la for sparsity " + format_real(target) +
                                      "; supported span is [0.5, 0.9], set la explicitly");
  }
  for (std::size_t k = 0; k + 1 < anchors.size(); ++k) {
    const auto [t0, la0] = anchors[k];
    const auto [t1, la1] = anchors[k + 1];
    if (target == t0) return la0;
    if (target == t1) return la1;
    if (target > t0 && target < t1) return la0 + (target - t0) / (t1 - t0) * (la1 - la0);
  }
  return anchors.back().second;
}

PruneOutcome prune_matrix(const MatrixBuffer& W, const RowContext& ctx, const EwmaParams& p, std::size_t workers,
                          const EwmaOptions& options) {
  p.validate();
  if (W.cols != ctx.n()) {
    throw Error(ErrorKind::dimension, "matrix has " + std::to_string(W.cols) + " columns, calibration has " +
                                          std::to_string(ctx.n()));
  }
  PruneOutcome out{MatrixBuffer{W.rows, W.cols, W.dtype, std::vector<double>(W.data.size())},
                   MaskMatrix(W.rows, W.cols), PruneReport{}, {}};
  std::vector<RowCounters> counters(W.rows);
  std::vector<std::vector<TraceRecord>> traces(options.record_trace ? W.rows : 0);

  const auto start = std::chrono::steady_clock::now();
  detail::for_each_row(W.rows, workers, [&](std::size_t r) {
    counters[r] = run_row(W.row(r), ctx, p, options.update_s, out.pruned.row(r), out.mask.row(r),
                          options.record_trace ? &traces[r] : nullptr, r);
  });
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

  summarize_mask(out.mask, out.report);
  out.report.wall_time_s = std::max(elapsed.count(), 1e-9);
  for (const auto& c : counters) {
    out.report.guards.denominator += c.guarded;
    out.report.guards.s_underflow_rows += c.s_clamped ? 1 : 0;
  }
  for (auto& t : traces) out.trace.insert(out.trace.end(), t.begin(), t.end());
  return out;
}

}  // namespace swiftprune
