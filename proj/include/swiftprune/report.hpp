#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "swiftprune/tensor_io.hpp"

namespace swiftprune {

struct GuardCounts {
  std::size_t denominator = 0;       // scores that hit the 1 - x^2/S guard
  std::size_t s_underflow_rows = 0;  // rows whose running S clamped at its floor
  std::size_t partial_groups = 0;    // trailing N:M groups left dense

  bool operator==(const GuardCounts&) const = default;
};

struct PruneReport {
  std::vector<double> per_row_sparsity;
  double global_sparsity = 0.0;  // pruned / total, exactly
  double wall_time_s = 0.0;
  std::size_t pruned = 0;
  std::size_t total = 0;
  GuardCounts guards;
  std::optional<RunConfig> config_echo;
};

/// The pruning result every mode produces.
struct PruneOutcome {
  MatrixBuffer pruned;
  MaskMatrix mask;
  PruneReport report;
  std::vector<TraceRecord> trace;  // empty unless tracing was requested
};

/// Fills the sparsity fields of `report` from `mask`.
void summarize_mask(const MaskMatrix& mask, PruneReport& report);

/// key=value text: the effective config (when echoed) followed by the results.
std::string format_report(const PruneReport& report);

}  // namespace swiftprune
