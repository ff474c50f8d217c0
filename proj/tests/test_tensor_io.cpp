#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

#include "swiftprune/tensor_io.hpp"
#include "test_util.hpp"

using namespace swiftprune;
using testutil::error_kind;

namespace {

std::vector<std::uint8_t> header(const char* magic, std::uint32_t version, std::uint8_t dtype, std::uint8_t ndim,
                                 std::initializer_list<std::uint64_t> dims) {
  std::vector<std::uint8_t> b(magic, magic + 4);
  for (int k = 0; k < 4; ++k) b.push_back(static_cast<std::uint8_t>(version >> (8 * k)));
  b.push_back(dtype);
  b.push_back(ndim);
  for (auto d : dims) {
    for (int k = 0; k < 8; ++k) b.push_back(static_cast<std::uint8_t>(d >> (8 * k)));
  }
  return b;
}

void append_f32(std::vector<std::uint8_t>& b, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  for (int k = 0; k < 4; ++k) b.push_back(static_cast<std::uint8_t>(u >> (8 * k)));
}

}  // namespace

TEST_CASE("read_matrix decodes a hand-built 2x2 identity") {
  auto bytes = header("SWPT", 1, 0, 2, {2, 2});
  for (float v : {1.0f, 0.0f, 0.0f, 1.0f}) append_f32(bytes, v);

  const auto m = decode_matrix(bytes);
  CHECK(m.rows == 2);
  CHECK(m.cols == 2);
  CHECK(m.dtype == DType::f32);
  CHECK(m.data == std::vector<double>{1, 0, 0, 1});
  CHECK(encode_matrix(m) == bytes);
}

TEST_CASE("header layout is little-endian with the documented field order") {
  const auto m = make_matrix(1, 3, {1.5, -2.0, 0.25}, DType::f64);
  const auto bytes = encode_matrix(m);
  REQUIRE(bytes.size() == 4 + 4 + 1 + 1 + 16 + 24);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SWPT");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 1);   // dtype f64
  CHECK(bytes[9] == 2);   // ndim
  CHECK(bytes[10] == 1);  // rows, low byte
  CHECK(bytes[18] == 3);  // cols, low byte
}

TEST_CASE("write_matrix/read_matrix round-trip is byte-identical through files") {
  testutil::TempDir dir;
  std::mt19937_64 rng(7);
  for (auto dtype : {DType::f32, DType::f64}) {
    auto data = testutil::gaussian(5 * 7, rng);
    if (dtype == DType::f32) {
      for (auto& v : data) v = static_cast<float>(v);
    }
    const auto m = make_matrix(5, 7, data, dtype);
    write_matrix(m, dir / "m.swpt");
    const auto original = read_file_bytes(dir / "m.swpt");
    const auto back = read_matrix(dir / "m.swpt");
    CHECK(back == m);
    write_matrix(back, dir / "m2.swpt");
    CHECK(read_file_bytes(dir / "m2.swpt") == original);
  }
}

TEST_CASE("loader errors: magic, version, truncation, non-finite") {
  auto good = header("SWPT", 1, 0, 2, {3, 3});
  for (int k = 0; k < 9; ++k) append_f32(good, 1.0f);
  REQUIRE_NOTHROW(decode_matrix(good));

  SUBCASE("bad magic") {
    auto b = good;
    b[0] = 'X';
    CHECK(error_kind([&] { decode_matrix(b); }) == ErrorKind::format);
  }
  SUBCASE("bad version") {
    auto b = good;
    b[4] = 2;
    CHECK(error_kind([&] { decode_matrix(b); }) == ErrorKind::format);
  }
  SUBCASE("declared 3x3 with 8 payload elements") {
    auto b = good;
    b.resize(b.size() - 4);
    CHECK(error_kind([&] { decode_matrix(b); }) == ErrorKind::truncation);
  }
  SUBCASE("trailing bytes beyond the declared payload") {
    auto b = good;
    append_f32(b, 2.0f);
    CHECK(error_kind([&] { decode_matrix(b); }) == ErrorKind::truncation);
  }
  SUBCASE("NaN element") {
    auto b = header("SWPT", 1, 0, 2, {1, 2});
    append_f32(b, 1.0f);
    append_f32(b, std::numeric_limits<float>::quiet_NaN());
    CHECK(error_kind([&] { decode_matrix(b); }) == ErrorKind::data);
  }
  SUBCASE("make_matrix length check") {
    CHECK(error_kind([&] { make_matrix(2, 2, {1, 2, 3}); }) == ErrorKind::truncation);
  }
}

TEST_CASE("vectors round-trip and calibration samples reduce by root-mean-square") {
  const VectorBuffer v{DType::f64, {0.5, -1.0, 3.0}};
  CHECK(decode_vector(encode_vector(v)) == v);
  CHECK(error_kind([&] { decode_matrix(encode_vector(v)); }) == ErrorKind::format);

  // Two samples: column sums of squares 1+9=10 and 4+16=20 -> sqrt(5), sqrt(10)
  const auto samples = make_matrix(2, 2, {1, 2, 3, 4}, DType::f64);
  const auto x = reduce_calibration(samples);
  REQUIRE(x.size() == 2);
  CHECK(x.data[0] == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK(x.data[1] == doctest::Approx(std::sqrt(10.0)).epsilon(1e-15));

  testutil::TempDir dir;
  write_matrix(samples, dir / "calib.swpt");
  CHECK(read_calibration(dir / "calib.swpt") == x);
  write_vector(v, dir / "vec.swpt");
  CHECK(read_calibration(dir / "vec.swpt") == v);
}

TEST_CASE("mask packing: bit k of the payload is element k") {
  MaskMatrix all_true(1, 8, true);
  CHECK(pack_mask_bits(all_true) == std::vector<std::uint8_t>{0xFF});

  MaskMatrix alternating(1, 4, false);
  alternating.bits = {1, 0, 1, 0};
  CHECK(pack_mask_bits(alternating) == std::vector<std::uint8_t>{0b0000'0101});

  MaskMatrix nine(3, 3, false);
  nine.bits[8] = 1;  // spills into a second, zero-padded byte
  CHECK(pack_mask_bits(nine) == std::vector<std::uint8_t>{0x00, 0x01});
}

TEST_CASE("read_mask(write_mask(m)) == m over random masks") {
  testutil::TempDir dir;
  std::mt19937_64 rng(11);
  std::bernoulli_distribution coin(0.4);
  std::uniform_int_distribution<std::size_t> dim(1, 37);
  for (int trial = 0; trial < 50; ++trial) {
    MaskMatrix m(dim(rng), dim(rng), false);
    for (auto& b : m.bits) b = coin(rng) ? 1 : 0;
    write_mask(m, dir / "m.mask");
    CHECK(read_mask(dir / "m.mask") == m);
  }
  auto bytes = encode_mask(MaskMatrix(2, 5, true));
  bytes.pop_back();
  CHECK(error_kind([&] { decode_mask(bytes); }) == ErrorKind::truncation);
}

TEST_CASE("trace CSV: header only when empty, exact round-trip of records") {
  std::ostringstream empty;
  write_trace({}, empty);
  CHECK(empty.str() == "row,i,L,est,dev,pruned\n");

  std::mt19937_64 rng(3);
  std::vector<TraceRecord> records;
  for (std::size_t i = 0; i < 40; ++i) {
    auto v = testutil::gaussian(3, rng);
    records.push_back({i / 10, i, std::fabs(v[0]) * 1e-5, v[1], std::fabs(v[2]), i % 3 == 0});
  }
  records.push_back({4, 0, std::numeric_limits<double>::infinity(), 0.1, 0.0, false});

  std::stringstream buf;
  write_trace(records, buf);
  buf << "#mean_L=1\n";
  CHECK(parse_trace(buf) == records);

  std::istringstream bad("row,i,L\n");
  CHECK(error_kind([&] { parse_trace(bad); }) == ErrorKind::format);
}

TEST_CASE("config parsing") {
  SUBCASE("EWMA settings given, everything else defaulted") {
    const auto cfg = parse_config("alpha=0.125\nbeta=0.125\nla=4");
    CHECK(cfg.alpha == 0.125);
    CHECK(cfg.beta == 0.125);
    CHECK(cfg.la == 4.0);
    CHECK(cfg.mode == PruneMode::ewma);
    CHECK(cfg.metric == MetricKind::swiftprune);
    CHECK(cfg.workers == 1);
    CHECK(cfg.seed == 42);
    CHECK(cfg.dtype == DType::f32);
  }
  SUBCASE("comments, blanks, spacing, nm pattern") {
    const auto cfg = parse_config("# run\n\n mode = nm \nnm=4:8\nmetric=wanda\nworkers=8\n");
    CHECK(cfg.mode == PruneMode::nm);
    CHECK(cfg.nm_n == 4);
    CHECK(cfg.nm_m == 8);
    CHECK(cfg.metric == MetricKind::wanda);
    CHECK(cfg.workers == 8);
  }
  SUBCASE("errors") {
    CHECK(error_kind([] { parse_config("alpha=1.5"); }) == ErrorKind::range);
    CHECK(error_kind([] { parse_config("beta=0"); }) == ErrorKind::range);
    CHECK(error_kind([] { parse_config("nm=4:4"); }) == ErrorKind::range);
    CHECK(error_kind([] { parse_config("gamma=0.1"); }) == ErrorKind::config);
    CHECK(error_kind([] { parse_config("alpha=0.1x"); }) == ErrorKind::config);
    CHECK(error_kind([] { parse_config("alpha"); }) == ErrorKind::config);
    CHECK(error_kind([] { parse_config("mode=fast"); }) == ErrorKind::config);
  }
  SUBCASE("format_config round-trips") {
    RunConfig cfg;
    cfg.mode = PruneMode::magnitude_threshold;
    cfg.la = -0.55;
    cfg.target_sparsity = 0.7;
    cfg.s_update = false;
    cfg.seed = 123456789012345ULL;
    CHECK(parse_config(format_config(cfg)) == cfg);
  }
}
