#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "swiftprune/harness.hpp"
#include "swiftprune/structured_nm.hpp"
#include "test_util.hpp"

using namespace swiftprune;

namespace {

struct Run {
  int code;
  std::string out;
};

// Runs the CLI with stdout captured and stderr discarded.
Run cli(const testutil::TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const std::string cmd =
      std::string("\"") + SWIFTPRUNE_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2>/dev/null";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("synth, prune and the written artifacts") {
  testutil::TempDir dir;
  REQUIRE(cli(dir, "synth --rows 64 --cols 256 --seed 7 --out " + q(dir / "layer")).code == 0);
  const auto w = q(dir / "layer.swpt"), x = q(dir / "layer.calib.swpt");

  const auto r = cli(dir, "prune --weights " + w + " --calib " + x + " --trace --out " + q(dir / "a"));
  CHECK(r.code == 0);
  CHECK(r.out.find("alpha=0.125\n") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "a.mask"));
  CHECK(std::filesystem::exists(dir / "a.report"));
  CHECK(std::filesystem::exists(dir / "a.trace.csv"));

  // Same inputs through a different worker count: identical bytes.
  CHECK(cli(dir, "prune --weights " + w + " --calib " + x + " --workers 4 --out " + q(dir / "b")).code == 0);
  CHECK(read_file_bytes(dir / "a.mask") == read_file_bytes(dir / "b.mask"));
  CHECK(read_file_bytes(dir / "a.swpt") == read_file_bytes(dir / "b.swpt"));

  CHECK(cli(dir, "prune --weights " + w + " --calib " + x + " --mode nm --nm 2:4 --out " + q(dir / "nm")).code == 0);
  CHECK(read_mask(dir / "nm.mask").sparsity() == 0.5);
  CHECK(unpack_nm(read_packed(dir / "nm.swnm")) == read_matrix(dir / "nm.swpt"));

  // Config file plus a flag override; the flag wins.
  std::ofstream(dir / "cfg.txt") << "mode=topk\nsparsity=0.25\nmetric=wanda\n";
  const auto t = cli(dir, "prune --weights " + w + " --calib " + x + " --config " + q(dir / "cfg.txt") +
                              " --sparsity 0.5 --out " + q(dir / "t"));
  CHECK(t.code == 0);
  CHECK(t.out.find("sparsity=0.5\n") != std::string::npos);
  CHECK(t.out.find("metric=wanda\n") != std::string::npos);
  CHECK(t.out.find("global_sparsity=0.5\n") != std::string::npos);
}

TEST_CASE("trace, compare, calibrate and bench subcommands") {
  testutil::TempDir dir;
  REQUIRE(cli(dir, "synth --rows 16 --cols 2048 --out " + q(dir / "l")).code == 0);
  const auto io = "--weights " + q(dir / "l.swpt") + " --calib " + q(dir / "l.calib.swpt");

  const auto tr = cli(dir, "trace " + io + " --row 3 --out " + q(dir / "t.csv"));
  CHECK(tr.code == 0);
  CHECK(read_trace(dir / "t.csv").size() == 2048);
  CHECK(tr.out.find("terminal_est=") != std::string::npos);

  std::ofstream(dir / "a.txt") << "mode=topk\n";
  const auto cmp = cli(dir, "compare " + io + " --config-a " + q(dir / "a.txt") + " --config-b " + q(dir / "a.txt"));
  CHECK(cmp.code == 0);
  CHECK(cmp.out.find("mask_overlap=1\n") != std::string::npos);
  CHECK(cmp.out.find("rank_correlation=1\n") != std::string::npos);
  CHECK(cmp.out.find("loss_delta=0\n") != std::string::npos);

  const auto cal = cli(dir, "calibrate " + io + " --targets 0.5,0.7,0.9");
  CHECK(cal.code == 0);
  CHECK(cal.out.rfind("target,la,achieved\n", 0) == 0);

  const auto bench =
      cli(dir, "bench --sizes 256,512 --oracle-sizes 16,32 --reps 1 --rows 2 --out " + q(dir / "b.csv"));
  CHECK(bench.code == 0);
  std::ifstream csv(dir / "b.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "mode,n,seconds");
}

TEST_CASE("exit codes") {
  testutil::TempDir dir;
  REQUIRE(cli(dir, "synth --rows 4 --cols 32 --out " + q(dir / "l")).code == 0);
  REQUIRE(cli(dir, "synth --rows 4 --cols 16 --out " + q(dir / "s")).code == 0);
  const auto w = q(dir / "l.swpt"), x = q(dir / "l.calib.swpt");

  SUBCASE("dimension mismatch -> 2") {
    CHECK(cli(dir, "prune --weights " + w + " --calib " + q(dir / "s.calib.swpt") + " --out " + q(dir / "o")).code ==
          2);
  }
  SUBCASE("bad config value -> 2") {
    CHECK(cli(dir, "prune --weights " + w + " --calib " + x + " --alpha 1.5 --out " + q(dir / "o")).code == 2);
    std::ofstream(dir / "bad.txt") << "gamma=1\n";
    CHECK(cli(dir, "prune --weights " + w + " --calib " + x + " --config " + q(dir / "bad.txt") + " --out " +
                       q(dir / "o"))
              .code == 2);
  }
  SUBCASE("unknown flag -> 2") { CHECK(cli(dir, "prune --frobnicate").code == 2); }
  SUBCASE("calibration target outside the anchors -> 2") {
    CHECK(cli(dir, "calibrate --weights " + w + " --calib " + x + " --targets 0.95").code == 2);
  }
  SUBCASE("corrupt file -> 3") {
    auto bytes = read_file_bytes(dir / "l.swpt");
    bytes[0] = 'Z';
    write_file_bytes(dir / "bad.swpt", bytes);
    CHECK(cli(dir, "prune --weights " + q(dir / "bad.swpt") + " --calib " + x + " --out " + q(dir / "o")).code == 3);
    bytes = read_file_bytes(dir / "l.swpt");
    bytes.resize(bytes.size() - 4);
    write_file_bytes(dir / "short.swpt", bytes);
    CHECK(cli(dir, "prune --weights " + q(dir / "short.swpt") + " --calib " + x + " --out " + q(dir / "o")).code ==
          3);
  }
}
