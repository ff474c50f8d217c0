// swiftprune: command-line front end for the pruning library.
//
//   swiftprune synth     --rows R --cols C [--seed S] [--family gaussian] --out PREFIX
//   swiftprune prune     --weights W --calib X [--config F] [overrides] --out PREFIX
//   swiftprune trace     --weights W --calib X [--config F] [overrides] --row R --out CSV
//   swiftprune compare   --weights W --calib X --config-a A --config-b B
//   swiftprune bench     [--sizes 1024,2048,...] [--oracle-sizes 32,...] [--reps N] [--out CSV]
//   swiftprune calibrate --weights W --calib X [--targets 0.5,0.6,...]
//
// Exit status: 0 success, 2 dimension/config error, 3 format error,
// 4 numerical guard escalation.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "swiftprune/errors.hpp"
#include "swiftprune/harness.hpp"
#include "swiftprune/kernels.hpp"
#include "swiftprune/tensor_io.hpp"

namespace {

using namespace swiftprune;

// RunConfig keys exposed as flags; values are applied on top of --config.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  bool trace = false;
  bool no_s_update = false;

  void attach(CLI::App* app, bool with_trace_flag) {
    app->add_option("--config", config_path, "key=value config file");
    for (const char* key : {"mode", "metric", "alpha", "beta", "la", "sparsity", "nm", "workers", "seed", "dtype"}) {
      app->add_option_function<std::string>(
          std::string("--") + key, [this, key](const std::string& v) { overrides[key] = v; },
          std::string("override config key '") + key + "'");
    }
    app->add_flag("--nm-streaming", [this](std::int64_t) { overrides["nm_streaming"] = "true"; },
                  "let S shrink across N:M groups");
    app->add_flag("--no-s-update", no_s_update, "disable the S <- S - w^2 state update");
    if (with_trace_flag) app->add_flag("--trace", trace, "also write <out>.trace.csv");
  }

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : read_config(config_path);
    for (const auto& [k, v] : overrides) apply_config_entry(cfg, k, v);
    if (trace) cfg.trace = true;
    if (no_s_update) cfg.s_update = false;
    cfg.validate();
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Hessian-free post-training weight pruning"};
  app.require_subcommand(1);

  // synth
  std::size_t rows = 256, cols = 512;
  std::uint64_t seed = 42;
  std::string family = "gaussian", synth_out;
  auto* synth = app.add_subcommand("synth", "write a deterministic synthetic layer");
  synth->add_option("--rows", rows);
  synth->add_option("--cols", cols);
  synth->add_option("--seed", seed);
  synth->add_option("--family", family)->check(CLI::IsMember({"gaussian", "heavy-tail", "constant"}));
  synth->add_option("--out", synth_out, "prefix; writes <out>.swpt and <out>.calib.swpt")->required();

  // prune
  std::string weights, calib, out;
  ConfigFlags prune_flags;
  auto* prune = app.add_subcommand("prune", "prune a weight matrix");
  prune->add_option("--weights", weights)->required();
  prune->add_option("--calib", calib)->required();
  prune->add_option("--out", out, "output prefix")->required();
  prune_flags.attach(prune, true);

  // trace
  ConfigFlags trace_flags;
  std::size_t trace_row_index = 0;
  auto* trace = app.add_subcommand("trace", "write the EWMA trace of one row");
  trace->add_option("--weights", weights)->required();
  trace->add_option("--calib", calib)->required();
  trace->add_option("--row", trace_row_index);
  trace->add_option("--out", out, "CSV path")->required();
  trace_flags.attach(trace, false);

  // compare
  std::string config_a, config_b;
  auto* compare = app.add_subcommand("compare", "compare two pruning configurations on one layer");
  compare->add_option("--weights", weights)->required();
  compare->add_option("--calib", calib)->required();
  compare->add_option("--config-a", config_a)->required();
  compare->add_option("--config-b", config_b)->required();
  compare->add_option("--out", out, "write the report here instead of stdout");

  // bench
  BenchOptions bench_opts;
  auto* bench = app.add_subcommand("bench", "time the pruners and the dense-inverse oracle");
  bench->add_option("--sizes", bench_opts.sizes)->delimiter(',');
  bench->add_option("--oracle-sizes", bench_opts.oracle_sizes)->delimiter(',');
  bench->add_option("--reps", bench_opts.reps);
  bench->add_option("--rows", bench_opts.rows);
  bench->add_option("--workers", bench_opts.workers);
  bench->add_option("--seed", bench_opts.seed);
  bench->add_option("--out", out, "CSV path (default stdout)");

  // calibrate
  std::vector<double> targets{0.5, 0.6, 0.7, 0.8, 0.9};
  ConfigFlags calib_flags;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "measure achieved sparsity for calibrated la values");
  calibrate_cmd->add_option("--weights", weights)->required();
  calibrate_cmd->add_option("--calib", calib)->required();
  calibrate_cmd->add_option("--targets", targets)->delimiter(',');
  calib_flags.attach(calibrate_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (synth->parsed()) {
    const auto fx = synth_fixture(rows, cols, seed, parse_family(family));
    write_matrix(fx.weights, synth_out + ".swpt");
    write_vector(fx.calibration, synth_out + ".calib.swpt");
    std::cout << "wrote " << synth_out << ".swpt and " << synth_out << ".calib.swpt\n";
  } else if (prune->parsed()) {
    const auto report = cmd_prune(weights, calib, prune_flags.resolve(), out);
    std::cout << format_report(report);
  } else if (trace->parsed()) {
    const auto summary = cmd_trace(weights, calib, trace_flags.resolve(), trace_row_index, out);
    std::cout << "mean_L=" << format_real(summary.mean_L) << "\nmad_L=" << format_real(summary.mad_L)
              << "\nterminal_est=" << format_real(summary.terminal_est)
              << "\nterminal_dev=" << format_real(summary.terminal_dev) << '\n';
  } else if (compare->parsed()) {
    const auto report = cmd_compare(weights, calib, read_config(config_a), read_config(config_b));
    if (out.empty()) {
      std::cout << format_compare(report);
    } else {
      std::ofstream(out) << format_compare(report);
    }
  } else if (bench->parsed()) {
    std::cerr << "kernels: " << kernels::active().name << '\n';
    const auto result = run_bench(bench_opts);
    if (out.empty()) {
      write_bench_csv(result, std::cout);
    } else {
      std::ofstream file(out);
      write_bench_csv(result, file);
    }
  } else if (calibrate_cmd->parsed()) {
    const auto layer = load_layer(weights, calib);
    const auto table = calibrate(layer.weights, layer.ctx, targets, calib_flags.resolve());
    write_calibration_csv(table, std::cout);
    if (!table.monotone) {
      std::cerr << "error: achieved sparsity is not strictly decreasing in la\n";
      return exit_code_for(ErrorKind::numerical);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const swiftprune::Error& e) {
    std::cerr << "error (" << swiftprune::to_string(e.kind()) << "): " << e.what() << '\n';
    return swiftprune::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
