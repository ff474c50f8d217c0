#pragma once

// End-to-end drivers behind the `swiftprune` command-line tool. Everything
// here is in-process so tests can call the same code paths the CLI uses.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swiftprune/ewma_pruner.hpp"
#include "swiftprune/metrics.hpp"
#include "swiftprune/report.hpp"
#include "swiftprune/tensor_io.hpp"

namespace swiftprune {

enum class FixtureFamily { gaussian, heavy_tail, constant };

const char* to_string(FixtureFamily family) noexcept;
FixtureFamily parse_family(std::string_view text);

struct Fixture {
  MatrixBuffer weights;
  VectorBuffer calibration;
};

/// Deterministic synthetic layer. gaussian: w ~ N(0, 0.02^2), x_j = |N(0,1)|;
/// heavy_tail: w ~ 0.02 * t(3), x_j ~ LogNormal(0,1); constant: w = 0.02, x = 1.
/// Values are rounded to f32 so the fixture stores exactly.
Fixture synth_fixture(std::size_t rows, std::size_t cols, std::uint64_t seed, FixtureFamily family);

struct LayerInputs {
  MatrixBuffer weights;
  RowContext ctx;
};

/// Reads weights and calibration; a column/length mismatch is a dimension error.
LayerInputs load_layer(const std::filesystem::path& weights, const std::filesystem::path& calib);

/// Dispatches on cfg.mode. The report echoes the effective config.
PruneOutcome run_pruning(const MatrixBuffer& W, const RowContext& ctx, const RunConfig& cfg);

/// Writes <prefix>.swpt, <prefix>.mask, <prefix>.report, plus <prefix>.swnm in
/// nm mode (when cols divide evenly) and <prefix>.trace.csv when cfg.trace.
PruneReport cmd_prune(const std::filesystem::path& weights, const std::filesystem::path& calib, const RunConfig& cfg,
                      const std::filesystem::path& out_prefix);

struct TraceSummary {
  std::vector<TraceRecord> records;
  double mean_L = 0.0;  // over well-posed scores
  double mad_L = 0.0;   // mean |L - mean_L|
  double terminal_est = 0.0;
  double terminal_dev = 0.0;
};

/// Streams one row through the EWMA rule with tracing on.
TraceSummary trace_row(const MatrixBuffer& W, const RowContext& ctx, const RunConfig& cfg, std::size_t row);

/// Writes the trace CSV followed by `#mean_L=` and `#mad_L=` summary lines.
TraceSummary cmd_trace(const std::filesystem::path& weights, const std::filesystem::path& calib, const RunConfig& cfg,
                       std::size_t row, const std::filesystem::path& out_csv);

/// Kendall tau-b in O(n log n). Both-constant inputs give 1, one constant
/// input gives 0.
double kendall_tau(std::span<const double> a, std::span<const double> b);

struct CompareReport {
  std::string label_a;
  std::string label_b;
  double mask_overlap = 0.0;      // fraction of positions with equal decisions
  double rank_correlation = 0.0;  // mean Kendall tau over sampled rows
  double loss_delta = 0.0;        // E_A - E_B
  std::size_t tau_rows = 0;
  std::size_t tau_positions = 0;  // per row; < cols when sampled
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kTauExactLimit = 4096;
inline constexpr std::size_t kTauRowSample = 16;

CompareReport compare_configs(const MatrixBuffer& W, const RowContext& ctx, const RunConfig& a, const RunConfig& b);
CompareReport cmd_compare(const std::filesystem::path& weights, const std::filesystem::path& calib,
                          const RunConfig& a, const RunConfig& b);
std::string format_compare(const CompareReport& report);

struct BenchOptions {
  std::vector<std::size_t> sizes{1024, 2048, 4096, 8192};
  std::vector<std::size_t> oracle_sizes{32, 64, 128, 256};
  std::size_t reps = 5;
  std::size_t rows = 64;
  std::size_t workers = 1;
  std::uint64_t seed = 42;
  double min_rep_seconds = 0.005;  // each rep repeats the call until this much time passes
};

struct BenchSample {
  std::string mode;
  std::size_t n = 0;
  double seconds = 0.0;  // best per-call time over reps
};

struct BenchResult {
  std::vector<BenchSample> samples;
  std::map<std::string, double> exponents;  // log-log slope per mode
};

/// Least-squares slope of log(t) against log(n).
double fit_loglog_slope(std::span<const double> n, std::span<const double> t);

/// Times the ewma pruner and sort-based top-k on rows x n Gaussian layers,
/// and the dense-inverse oracle on single rows of oracle_sizes.
BenchResult run_bench(const BenchOptions& options);
void write_bench_csv(const BenchResult& result, std::ostream& out);

struct CalibrationRow {
  double target = 0.0;
  double la = 0.0;
  double achieved = 0.0;
};

struct CalibrationTable {
  std::vector<CalibrationRow> rows;
  bool monotone = true;  // achieved sparsity strictly decreasing in la
};

/// Runs the EWMA pruner once per target with la_for_sparsity(target).
CalibrationTable calibrate(const MatrixBuffer& W, const RowContext& ctx, std::span<const double> targets,
                           const RunConfig& base);
void write_calibration_csv(const CalibrationTable& table, std::ostream& out);

}  // namespace swiftprune
