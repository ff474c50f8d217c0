#include "swiftprune/report.hpp"

#include <sstream>

namespace swiftprune {

void summarize_mask(const MaskMatrix& mask, PruneReport& report) {
  report.per_row_sparsity.assign(mask.rows, 0.0);
  report.pruned = 0;
  report.total = mask.rows * mask.cols;
  for (std::size_t r = 0; r < mask.rows; ++r) {
    std::size_t pruned = 0;
    for (auto bit : mask.row(r)) pruned += bit ? 0 : 1;
    report.pruned += pruned;
    if (mask.cols > 0) report.per_row_sparsity[r] = static_cast<double>(pruned) / static_cast<double>(mask.cols);
  }
  report.global_sparsity =
      report.total == 0 ? 0.0 : static_cast<double>(report.pruned) / static_cast<double>(report.total);
}

std::string format_report(const PruneReport& report) {
  std::ostringstream out;
  if (report.config_echo) out << format_config(*report.config_echo);
  out << "pruned=" << report.pruned << '\n'
      << "total=" << report.total << '\n'
      << "global_sparsity=" << format_real(report.global_sparsity) << '\n'
      << "wall_time_s=" << format_real(report.wall_time_s) << '\n'
      << "guard_denominator=" << report.guards.denominator << '\n'
      << "guard_s_underflow_rows=" << report.guards.s_underflow_rows << '\n'
      << "guard_partial_groups=" << report.guards.partial_groups << '\n'
      << "per_row_sparsity=";
  for (std::size_t r = 0; r < report.per_row_sparsity.size(); ++r) {
    if (r > 0) out << ',';
    out << format_real(report.per_row_sparsity[r]);
  }
  out << '\n';
  return out.str();
}

}  // namespace swiftprune
