#pragma once

// Sort-based baselines. Top-k is the streaming pruner's control: same scores
// (S fixed at S0), exact per-row sparsity, O(n log n) per row.

#include <cstddef>

#include "swiftprune/metrics.hpp"
#include "swiftprune/report.hpp"

namespace swiftprune {

/// Number of weights a top-k selection prunes from a row of length n.
std::size_t topk_prune_count(std::size_t n, double sparsity);

/// Per row, prunes the round(sparsity * n) lowest-scoring weights. Ties go
/// to the lower index first.
PruneOutcome prune_matrix_topk(const MatrixBuffer& W, const RowContext& ctx, MetricKind metric, double sparsity,
                               std::size_t workers = 1);

/// Layer-wide magnitude baseline: one |w| threshold over the whole matrix,
/// pruning round(sparsity * rows * cols) weights (ties to the lower flat index).
PruneOutcome prune_matrix_magnitude_threshold(const MatrixBuffer& W, double sparsity);

}  // namespace swiftprune
