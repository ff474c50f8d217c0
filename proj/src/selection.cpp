#include "swiftprune/selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "parallel.hpp"
#include "swiftprune/errors.hpp"

namespace swiftprune {

namespace {

void check_sparsity(double sparsity) {
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) {
    throw Error(ErrorKind::range, "sparsity must lie in [0,1], got " + format_real(sparsity));
  }
}

}  // namespace

std::size_t topk_prune_count(std::size_t n, double sparsity) {
  check_sparsity(sparsity);
  const auto k = static_cast<std::size_t>(std::llround(sparsity * static_cast<double>(n)));
  return std::min(k, n);
}

PruneOutcome prune_matrix_topk(const MatrixBuffer& W, const RowContext& ctx, MetricKind metric, double sparsity,
                               std::size_t workers) {
  if (W.cols != ctx.n()) throw Error(ErrorKind::dimension, "matrix columns do not match calibration length");
  const std::size_t k = topk_prune_count(W.cols, sparsity);
  PruneOutcome out{W, MaskMatrix(W.rows, W.cols), PruneReport{}, {}};
  std::vector<std::size_t> guarded(W.rows, 0);

  const auto start = std::chrono::steady_clock::now();
  detail::for_each_row(W.rows, workers, [&](std::size_t r) {
    std::vector<double> scores(W.cols);
    score_row(metric, W.row(r), ctx, scores);
    std::vector<std::uint32_t> order(W.cols);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
    });
    auto dst = out.pruned.row(r);
    auto mask = out.mask.row(r);
    for (std::size_t j = 0; j < k; ++j) {
      dst[order[j]] = 0.0;
      mask[order[j]] = 0;
    }
    guarded[r] = static_cast<std::size_t>(std::count(scores.begin(), scores.end(), HUGE_VAL));
  });
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

  summarize_mask(out.mask, out.report);
  out.report.wall_time_s = std::max(elapsed.count(), 1e-9);
  out.report.guards.denominator = std::accumulate(guarded.begin(), guarded.end(), std::size_t{0});
  return out;
}

PruneOutcome prune_matrix_magnitude_threshold(const MatrixBuffer& W, double sparsity) {
  const std::size_t total = W.data.size();
  const std::size_t k = topk_prune_count(total, sparsity);
  PruneOutcome out{W, MaskMatrix(W.rows, W.cols), PruneReport{}, {}};

  const auto start = std::chrono::steady_clock::now();
  if (k > 0) {
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto less = [&](std::size_t a, std::size_t b) {
      const double fa = std::fabs(W.data[a]);
      const double fb = std::fabs(W.data[b]);
      return fa < fb || (fa == fb && a < b);
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), less);
    for (std::size_t j = 0; j < k; ++j) {
      out.pruned.data[order[j]] = 0.0;
      out.mask.bits[order[j]] = 0;
    }
  }
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

  summarize_mask(out.mask, out.report);
  out.report.wall_time_s = std::max(elapsed.count(), 1e-9);
  return out;
}

}  // namespace swiftprune
