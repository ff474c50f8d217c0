#include "swiftprune/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "swiftprune/errors.hpp"
#include "swiftprune/selection.hpp"
#include "swiftprune/structured_nm.hpp"

namespace swiftprune {

const char* to_string(FixtureFamily family) noexcept {
  switch (family) {
    case FixtureFamily::gaussian: return "gaussian";
    case FixtureFamily::heavy_tail: return "heavy-tail";
    case FixtureFamily::constant: return "constant";
  }
  return "?";
}

FixtureFamily parse_family(std::string_view text) {
  for (auto f : {FixtureFamily::gaussian, FixtureFamily::heavy_tail, FixtureFamily::constant}) {
    if (text == to_string(f)) return f;
  }
  throw Error(ErrorKind::config, "unknown fixture family '" + std::string(text) + "'");
}

Fixture synth_fixture(std::size_t rows, std::size_t cols, std::uint64_t seed, FixtureFamily family) {
  if (cols == 0) throw Error(ErrorKind::dimension, "fixture needs at least one column");
  std::mt19937_64 rng(seed);
  auto f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  Fixture fx{MatrixBuffer{rows, cols, DType::f32, std::vector<double>(rows * cols)},
             VectorBuffer{DType::f32, std::vector<double>(cols)}};

  switch (family) {
    case FixtureFamily::gaussian: {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (auto& x : fx.calibration.data) x = f32(std::fabs(normal(rng)));
      for (auto& w : fx.weights.data) w = f32(0.02 * normal(rng));
      break;
    }
    case FixtureFamily::heavy_tail: {
      std::lognormal_distribution<double> lognormal(0.0, 1.0);
      std::student_t_distribution<double> student(3.0);
      for (auto& x : fx.calibration.data) x = f32(lognormal(rng));
      for (auto& w : fx.weights.data) w = f32(0.02 * student(rng));
      break;
    }
    case FixtureFamily::constant:
      std::fill(fx.calibration.data.begin(), fx.calibration.data.end(), 1.0);
      std::fill(fx.weights.data.begin(), fx.weights.data.end(), f32(0.02));
      break;
  }
  // |N(0,1)| can in principle come out all zero for tiny cols; keep S > 0.
  if (std::all_of(fx.calibration.data.begin(), fx.calibration.data.end(), [](double v) { return v == 0.0; })) {
    fx.calibration.data[0] = 1.0;
  }
  return fx;
}

LayerInputs load_layer(const std::filesystem::path& weights, const std::filesystem::path& calib) {
  auto W = read_matrix(weights);
  RowContext ctx(read_calibration(calib));
  if (W.cols != ctx.n()) {
    throw Error(ErrorKind::dimension, "weights have " + std::to_string(W.cols) + " columns but calibration has " +
                                          std::to_string(ctx.n()) + " entries");
  }
  return {std::move(W), std::move(ctx)};
}

PruneOutcome run_pruning(const MatrixBuffer& W, const RowContext& ctx, const RunConfig& cfg) {
  cfg.validate();
  PruneOutcome out;
  switch (cfg.mode) {
    case PruneMode::ewma:
      if (cfg.metric != MetricKind::swiftprune) {
        throw Error(ErrorKind::config, "ewma mode streams contribution scores; use metric=swiftprune");
      }
      out = prune_matrix(W, ctx, EwmaParams::from(cfg), cfg.workers, EwmaOptions{cfg.s_update, cfg.trace});
      break;
    case PruneMode::topk:
      out = prune_matrix_topk(W, ctx, cfg.metric, cfg.target_sparsity, cfg.workers);
      break;
    case PruneMode::nm:
      out = prune_matrix_nm(W, ctx, NMPattern{cfg.nm_n, cfg.nm_m}, NmOptions{cfg.metric, cfg.nm_streaming},
                            cfg.workers);
      break;
    case PruneMode::magnitude_threshold:
      out = prune_matrix_magnitude_threshold(W, cfg.target_sparsity);
      break;
  }
  out.report.config_echo = cfg;
  return out;
}

PruneReport cmd_prune(const std::filesystem::path& weights, const std::filesystem::path& calib, const RunConfig& cfg,
                      const std::filesystem::path& out_prefix) {
  const auto layer = load_layer(weights, calib);
  auto out = run_pruning(layer.weights, layer.ctx, cfg);

  auto with_ext = [&](const char* ext) { return std::filesystem::path(out_prefix.string() + ext); };
  write_matrix(out.pruned, with_ext(".swpt"));
  write_mask(out.mask, with_ext(".mask"));
  if (cfg.mode == PruneMode::nm && layer.weights.cols % cfg.nm_m == 0) {
    write_packed(pack_nm(out.pruned, out.mask, NMPattern{cfg.nm_n, cfg.nm_m}), with_ext(".swnm"));
  }
  if (cfg.trace && !out.trace.empty()) write_trace(out.trace, with_ext(".trace.csv"));

  std::ofstream report(with_ext(".report"), std::ios::trunc);
  if (!report) throw Error(ErrorKind::io, "cannot create " + with_ext(".report").string());
  report << format_report(out.report);
  return out.report;
}

TraceSummary trace_row(const MatrixBuffer& W, const RowContext& ctx, const RunConfig& cfg, std::size_t row) {
  cfg.validate();
  if (row >= W.rows) {
    throw Error(ErrorKind::dimension, "row " + std::to_string(row) + " out of range (" + std::to_string(W.rows) + " rows)");
  }
  if (W.cols != ctx.n()) throw Error(ErrorKind::dimension, "matrix columns do not match calibration length");
  auto result = prune_row(W.row(row), ctx, EwmaParams::from(cfg), EwmaOptions{cfg.s_update, true}, row);

  TraceSummary s;
  s.records = std::move(*result.trace);
  std::size_t count = 0;
  for (const auto& r : s.records) {
    if (!std::isfinite(r.L)) continue;
    s.mean_L += r.L;
    ++count;
  }
  if (count > 0) s.mean_L /= static_cast<double>(count);
  for (const auto& r : s.records) {
    if (std::isfinite(r.L)) s.mad_L += std::fabs(r.L - s.mean_L);
  }
  if (count > 0) s.mad_L /= static_cast<double>(count);
  if (!s.records.empty()) {
    s.terminal_est = s.records.back().est;
    s.terminal_dev = s.records.back().dev;
  }
  return s;
}

TraceSummary cmd_trace(const std::filesystem::path& weights, const std::filesystem::path& calib, const RunConfig& cfg,
                       std::size_t row, const std::filesystem::path& out_csv) {
  const auto layer = load_layer(weights, calib);
  auto summary = trace_row(layer.weights, layer.ctx, cfg, row);
  std::ofstream out(out_csv, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot create " + out_csv.string());
  write_trace(summary.records, out);
  out << "#mean_L=" << format_real(summary.mean_L) << '\n' << "#mad_L=" << format_real(summary.mad_L) << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed for " + out_csv.string());
  return summary;
}

// ---------------------------------------------------------------------------
// Kendall tau-b (Knight's merge-sort algorithm)

namespace {

using Pair = std::pair<double, double>;

// Sorts v[lo, hi) by .second, returning the number of strict inversions.
std::uint64_t merge_count(std::vector<Pair>& v, std::vector<Pair>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j].second < v[i].second) {
      swaps += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

template <typename Eq>
std::uint64_t tied_pairs(const std::vector<Pair>& v, Eq eq) {
  std::uint64_t total = 0, run = 1;
  for (std::size_t k = 1; k <= v.size(); ++k) {
    if (k < v.size() && eq(v[k - 1], v[k])) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

}  // namespace

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::dimension, "kendall_tau: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::vector<Pair> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = {a[k], b[k]};
  std::sort(v.begin(), v.end());

  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t ties_a = tied_pairs(v, [](const Pair& p, const Pair& q) { return p.first == q.first; });
  const std::uint64_t ties_ab = tied_pairs(v, [](const Pair& p, const Pair& q) { return p == q; });
  std::vector<Pair> buf(n);
  const std::uint64_t swaps = merge_count(v, buf, 0, n);
  const std::uint64_t ties_b = tied_pairs(v, [](const Pair& p, const Pair& q) { return p.second == q.second; });

  const double denom_a = static_cast<double>(n0 - ties_a);
  const double denom_b = static_cast<double>(n0 - ties_b);
  if (denom_a == 0.0 || denom_b == 0.0) return denom_a == denom_b ? 1.0 : 0.0;
  const double numer = static_cast<double>(n0) - static_cast<double>(ties_a) - static_cast<double>(ties_b) +
                       static_cast<double>(ties_ab) - 2.0 * static_cast<double>(swaps);
  return numer / std::sqrt(denom_a * denom_b);
}

// ---------------------------------------------------------------------------
// compare

CompareReport compare_configs(const MatrixBuffer& W, const RowContext& ctx, const RunConfig& a, const RunConfig& b) {
  const auto out_a = run_pruning(W, ctx, a);
  const auto out_b = run_pruning(W, ctx, b);

  CompareReport rep;
  rep.label_a = std::string(to_string(a.mode)) + "/" + to_string(a.metric);
  rep.label_b = std::string(to_string(b.mode)) + "/" + to_string(b.metric);
  rep.seed = a.seed;

  std::size_t agree = 0;
  for (std::size_t k = 0; k < out_a.mask.bits.size(); ++k) agree += out_a.mask.bits[k] == out_b.mask.bits[k] ? 1 : 0;
  rep.mask_overlap = out_a.mask.bits.empty() ? 1.0
                                             : static_cast<double>(agree) / static_cast<double>(out_a.mask.bits.size());
  rep.loss_delta = layer_loss(W, out_a.pruned, ctx) - layer_loss(W, out_b.pruned, ctx);

  std::mt19937_64 rng(rep.seed);
  std::vector<std::size_t> rows(W.rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (rows.size() > kTauRowSample) {
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(kTauRowSample);
    std::sort(rows.begin(), rows.end());
  }
  std::vector<std::size_t> positions(W.cols);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  if (positions.size() > kTauExactLimit) {
    std::shuffle(positions.begin(), positions.end(), rng);
    positions.resize(kTauExactLimit);
    std::sort(positions.begin(), positions.end());
  }
  rep.tau_rows = rows.size();
  rep.tau_positions = positions.size();

  double tau_sum = 0.0;
  std::vector<double> sa(positions.size()), sb(positions.size());
  for (auto r : rows) {
    const auto full_a = score_row(a.metric, W.row(r), ctx);
    const auto full_b = score_row(b.metric, W.row(r), ctx);
    for (std::size_t k = 0; k < positions.size(); ++k) {
      sa[k] = full_a[positions[k]];
      sb[k] = full_b[positions[k]];
    }
    tau_sum += kendall_tau(sa, sb);
  }
  rep.rank_correlation = rows.empty() ? 1.0 : tau_sum / static_cast<double>(rows.size());
  return rep;
}

CompareReport cmd_compare(const std::filesystem::path& weights, const std::filesystem::path& calib,
                          const RunConfig& a, const RunConfig& b) {
  const auto layer = load_layer(weights, calib);
  return compare_configs(layer.weights, layer.ctx, a, b);
}

std::string format_compare(const CompareReport& report) {
  std::ostringstream out;
  out << "method_a=" << report.label_a << '\n'
      << "method_b=" << report.label_b << '\n'
      << "mask_overlap=" << format_real(report.mask_overlap) << '\n'
      << "rank_correlation=" << format_real(report.rank_correlation) << '\n'
      << "loss_delta=" << format_real(report.loss_delta) << '\n'
      << "tau_rows=" << report.tau_rows << '\n'
      << "tau_positions=" << report.tau_positions << '\n'
      << "seed=" << report.seed << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// bench

double fit_loglog_slope(std::span<const double> n, std::span<const double> t) {
  if (n.size() != t.size() || n.size() < 2) throw Error(ErrorKind::dimension, "slope fit needs >= 2 paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n.size(); ++k) {
    mx += std::log(n[k]);
    my += std::log(t[k]);
  }
  mx /= static_cast<double>(n.size());
  my /= static_cast<double>(n.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < n.size(); ++k) {
    const double dx = std::log(n[k]) - mx;
    sxy += dx * (std::log(t[k]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

namespace {

// Per-call time of one rep: fn repeated until min_seconds have passed.
template <typename Fn>
double time_rep(double min_seconds, Fn&& fn) {
  using clock = std::chrono::steady_clock;
  std::size_t calls = 0;
  const auto start = clock::now();
  std::chrono::duration<double> elapsed{};
  do {
    fn();
    ++calls;
    elapsed = clock::now() - start;
  } while (elapsed.count() < min_seconds);
  return elapsed.count() / static_cast<double>(calls);
}

struct BenchCase {
  std::string mode;
  std::size_t n;
  std::function<void()> call;
  double best = INFINITY;
};

}  // namespace

BenchResult run_bench(const BenchOptions& options) {
  if (!std::is_sorted(options.sizes.begin(), options.sizes.end()) ||
      !std::is_sorted(options.oracle_sizes.begin(), options.oracle_sizes.end())) {
    throw Error(ErrorKind::config, "bench sizes must be sorted ascending");
  }
  const EwmaParams params{};
  // Fixtures are built up front so timing covers scoring and selection only.
  std::vector<LayerInputs> layers;
  layers.reserve(options.sizes.size() + options.oracle_sizes.size());
  for (auto n : options.sizes) {
    auto fx = synth_fixture(options.rows, n, options.seed, FixtureFamily::gaussian);
    layers.push_back({std::move(fx.weights), RowContext(fx.calibration)});
  }
  for (auto n : options.oracle_sizes) {
    auto fx = synth_fixture(1, n, options.seed, FixtureFamily::gaussian);
    layers.push_back({std::move(fx.weights), RowContext(fx.calibration)});
  }

  std::vector<BenchCase> cases;
  for (std::size_t k = 0; k < options.sizes.size(); ++k) {
    const auto& L = layers[k];
    cases.push_back({"ewma", options.sizes[k], [&L, &params, &options] {
                       auto out = prune_matrix(L.weights, L.ctx, params, options.workers);
                       (void)out;
                     }});
    cases.push_back({"topk", options.sizes[k], [&L, &options] {
                       auto out = prune_matrix_topk(L.weights, L.ctx, MetricKind::swiftprune, 0.5, options.workers);
                       (void)out;
                     }});
  }
  for (std::size_t k = 0; k < options.oracle_sizes.size(); ++k) {
    const auto& L = layers[options.sizes.size() + k];
    const std::size_t n = options.oracle_sizes[k];
    cases.push_back({"oracle", n, [&L, n] {
                       auto diag = hqq_inv_brute_all(L.ctx, n);
                       (void)diag;
                     }});
  }

  // Reps are interleaved across cases so a transient slowdown lands on every
  // size rather than skewing one end of the fit.
  for (std::size_t rep = 0; rep < std::max<std::size_t>(options.reps, 1); ++rep) {
    for (auto& c : cases) c.best = std::min(c.best, time_rep(options.min_rep_seconds, c.call));
  }

  BenchResult result;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> series;
  for (const auto& c : cases) {
    result.samples.push_back({c.mode, c.n, c.best});
    series[c.mode].first.push_back(static_cast<double>(c.n));
    series[c.mode].second.push_back(c.best);
  }
  for (const auto& [mode, pts] : series) {
    if (pts.first.size() >= 2) result.exponents[mode] = fit_loglog_slope(pts.first, pts.second);
  }
  return result;
}

void write_bench_csv(const BenchResult& result, std::ostream& out) {
  out << "mode,n,seconds\n";
  for (const auto& s : result.samples) out << s.mode << ',' << s.n << ',' << format_real(s.seconds) << '\n';
  for (const auto& [mode, slope] : result.exponents) out << "#exponent," << mode << ',' << format_real(slope) << '\n';
}

// ---------------------------------------------------------------------------
// calibrate

CalibrationTable calibrate(const MatrixBuffer& W, const RowContext& ctx, std::span<const double> targets,
                           const RunConfig& base) {
  CalibrationTable table;
  for (double target : targets) {
    RunConfig cfg = base;
    cfg.mode = PruneMode::ewma;
    cfg.metric = MetricKind::swiftprune;
    cfg.trace = false;
    cfg.la = la_for_sparsity(target);
    const auto out = run_pruning(W, ctx, cfg);
    table.rows.push_back({target, cfg.la, out.report.global_sparsity});
  }
  auto by_la = table.rows;
  std::sort(by_la.begin(), by_la.end(), [](const auto& p, const auto& q) { return p.la < q.la; });
  for (std::size_t k = 1; k < by_la.size(); ++k) {
    if (by_la[k].la > by_la[k - 1].la && !(by_la[k].achieved < by_la[k - 1].achieved)) table.monotone = false;
  }
  return table;
}

void write_calibration_csv(const CalibrationTable& table, std::ostream& out) {
  out << "target,la,achieved\n";
  for (const auto& r : table.rows) {
    out << format_real(r.target) << ',' << format_real(r.la) << ',' << format_real(r.achieved) << '\n';
  }
  out << "#monotone=" << (table.monotone ? "true" : "false") << '\n';
}

}  // namespace swiftprune
