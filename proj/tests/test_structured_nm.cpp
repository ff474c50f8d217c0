#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "swiftprune/structured_nm.hpp"
#include "test_util.hpp"

using namespace swiftprune;
using testutil::error_kind;

namespace {

using Keep = std::vector<std::size_t>;

// Random matrix with a random valid N:M mask applied.
std::pair<MatrixBuffer, MaskMatrix> random_masked(std::size_t rows, std::size_t cols, const NMPattern& pat,
                                                 std::mt19937_64& rng) {
  auto data = testutil::gaussian(rows * cols, rng);
  for (auto& v : data) v = static_cast<float>(v);
  MaskMatrix mask(rows, cols, false);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t g = 0; g < cols / pat.m_group; ++g) {
      std::vector<std::size_t> pos(pat.m_group);
      std::iota(pos.begin(), pos.end(), 0);
      std::shuffle(pos.begin(), pos.end(), rng);
      for (std::size_t k = 0; k < pat.n_keep; ++k) mask.bits[r * cols + g * pat.m_group + pos[k]] = 1;
    }
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!mask.bits[i]) data[i] = 0.0;
  }
  return {make_matrix(rows, cols, data, DType::f32), mask};
}

}  // namespace

TEST_CASE("pattern validation") {
  CHECK_NOTHROW(NMPattern{2, 4}.validate());
  CHECK_NOTHROW(NMPattern{4, 8}.validate());
  CHECK(error_kind([] { NMPattern{4, 4}.validate(); }) == ErrorKind::range);
  CHECK(error_kind([] { NMPattern{0, 4}.validate(); }) == ErrorKind::range);
  CHECK(error_kind([] { NMPattern{2, 64}.validate(); }) == ErrorKind::range);
  CHECK(NMPattern{2, 4}.index_bits() == 2);
  CHECK(NMPattern{4, 8}.index_bits() == 3);
}

TEST_CASE("select_nm_group") {
  const NMPattern p24{2, 4};
  CHECK(select_nm_group(std::vector<double>{0.1, 0.4, 0.2, 0.3}, p24) == Keep{1, 3});
  CHECK(select_nm_group(std::vector<double>{1, 1, 1, 1}, p24) == Keep{2, 3});
  CHECK(select_nm_group(std::vector<double>{5, 0, 0, 7}, p24) == Keep{0, 3});
  CHECK(select_nm_group(std::vector<double>{3, 1, 4, 1, 5, 9, 2, 6}, NMPattern{4, 8}) == Keep{2, 4, 5, 7});

  std::vector<std::uint8_t> keep(4);
  CHECK(select_nm_group(std::vector<double>{0.1, 0.4, 0.2, 0.3}, p24, keep) == 5);
  CHECK(keep == std::vector<std::uint8_t>{0, 1, 0, 1});
  std::vector<std::uint8_t> keep8(8);
  CHECK(select_nm_group(std::vector<double>(8, 0.0), NMPattern{4, 8}, keep8) == 7 + 6 + 5 + 4);
}

TEST_CASE("prune_matrix_nm") {
  SUBCASE("hand example: scores proportional to w^2") {
    const auto W = make_matrix(1, 8, {1, 9, 2, 8, 3, 7, 4, 6}, DType::f64);
    const RowContext ctx(std::vector<double>(8, 1.0));
    const auto out = prune_matrix_nm(W, ctx, NMPattern{2, 4});
    CHECK(out.mask.bits == std::vector<std::uint8_t>{0, 1, 0, 1, 0, 1, 0, 1});
    CHECK(out.report.global_sparsity == 0.5);
  }
  SUBCASE("random layers: structure, exact sparsity, worker invariance") {
    std::mt19937_64 rng(8);
    const std::size_t rows = 16, cols = 256;
    const auto W = make_matrix(rows, cols, testutil::gaussian(rows * cols, rng, 0.02), DType::f64);
    const RowContext ctx(testutil::uniform(cols, rng, 0.1, 2.0));
    for (auto pat : {NMPattern{2, 4}, NMPattern{4, 8}, NMPattern{1, 4}}) {
      for (auto metric : {MetricKind::swiftprune, MetricKind::magnitude, MetricKind::wanda}) {
        for (bool streaming : {false, true}) {
          if (streaming && metric != MetricKind::swiftprune) continue;
          const auto out = prune_matrix_nm(W, ctx, pat, {metric, streaming}, 1);
          CHECK(satisfies_nm(out.mask, pat));
          CHECK(out.report.global_sparsity ==
                static_cast<double>(pat.m_group - pat.n_keep) / static_cast<double>(pat.m_group));
          CHECK(prune_matrix_nm(W, ctx, pat, {metric, streaming}, 4).mask == out.mask);
        }
      }
    }
  }
  SUBCASE("trailing partial group stays dense and is flagged") {
    const auto W = make_matrix(2, 6, {1, 2, 3, 4, 5, 6, 6, 5, 4, 3, 2, 1}, DType::f64);
    const auto out = prune_matrix_nm(W, RowContext(std::vector<double>(6, 1.0)), NMPattern{2, 4});
    CHECK(out.report.guards.partial_groups == 2);
    CHECK(out.mask.bits == std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1, 1, 1, 0, 0, 1, 1});
  }
}

TEST_CASE("satisfies_nm") {
  MaskMatrix m(1, 8, false);
  m.bits = {1, 1, 0, 0, 0, 1, 0, 1};
  CHECK(satisfies_nm(m, NMPattern{2, 4}));
  m.bits[2] = 1;
  CHECK_FALSE(satisfies_nm(m, NMPattern{2, 4}));
}

TEST_CASE("packing") {
  const NMPattern p24{2, 4};
  const auto dense = make_matrix(1, 4, {1, 0, 2, 0}, DType::f64);
  MaskMatrix mask(1, 4, false);
  mask.bits = {1, 0, 1, 0};
  const auto packed = pack_nm(dense, mask, p24);
  CHECK(packed.values == std::vector<double>{1, 2});
  CHECK(packed.indices == std::vector<std::uint8_t>{0, 2});
  CHECK(unpack_nm(packed) == dense);
  CHECK(packed_mask(packed) == mask);
  CHECK(masked_matvec(packed, std::vector<double>(4, 1.0)) == std::vector<double>{3.0});

  SUBCASE("invalid inputs") {
    auto bad = packed;
    bad.indices = {2, 1};
    CHECK(error_kind([&] { bad.validate(); }) == ErrorKind::structure);
    MaskMatrix three(1, 4, false);
    three.bits = {1, 1, 1, 0};
    CHECK(error_kind([&] { pack_nm(dense, three, p24); }) == ErrorKind::structure);
    CHECK(error_kind([&] { pack_nm(make_matrix(1, 6, std::vector<double>(6, 0.0)), MaskMatrix(1, 6, true), p24); }) ==
          ErrorKind::structure);
    CHECK(error_kind([&] { masked_matvec(packed, std::vector<double>(3, 1.0)); }) == ErrorKind::dimension);
  }

  SUBCASE("zero values give a zero product") {
    auto zero = packed;
    zero.values = {0.0, 0.0};
    CHECK(masked_matvec(zero, std::vector<double>{1, 2, 3, 4}) == std::vector<double>{0.0});
  }
}

TEST_CASE("pack/unpack round-trip, matvec and file codec over random instances") {
  std::mt19937_64 rng(21);
  testutil::TempDir dir;
  for (int trial = 0; trial < 40; ++trial) {
    const NMPattern pat = trial % 2 ? NMPattern{2, 4} : NMPattern{4, 8};
    const std::size_t rows = 1 + trial % 7, cols = pat.m_group * (1 + trial % 13);
    const auto [dense, mask] = random_masked(rows, cols, pat, rng);
    const auto packed = pack_nm(dense, mask, pat);
    CHECK(unpack_nm(packed) == dense);
    CHECK(packed_mask(packed) == mask);

    const auto v = testutil::gaussian(cols, rng);
    const auto y = masked_matvec(packed, v);
    for (std::size_t r = 0; r < rows; ++r) {
      double ref = 0, scale = 0;
      for (std::size_t c = 0; c < cols; ++c) {
        ref += dense.at(r, c) * v[c];
        scale += std::fabs(dense.at(r, c) * v[c]);
      }
      CHECK(std::fabs(y[r] - ref) <= 1e-12 * std::max(scale, 1e-300));
    }

    write_packed(packed, dir / "p.swnm");
    CHECK(read_packed(dir / "p.swnm") == packed);
  }
}

TEST_CASE(".swnm header layout and corruption") {
  const auto dense = make_matrix(1, 4, {1, 0, 2, 0}, DType::f32);
  MaskMatrix mask(1, 4, false);
  mask.bits = {1, 0, 1, 0};
  auto bytes = encode_packed(pack_nm(dense, mask, NMPattern{2, 4}));
  REQUIRE(bytes.size() == 4 + 4 + 4 + 16 + 2 * 4 + 2);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SWNM");
  CHECK(bytes[8] == 0);   // dtype
  CHECK(bytes[9] == 2);   // n_keep
  CHECK(bytes[10] == 4);  // m_group
  CHECK(bytes[11] == 2);  // index bits
  CHECK(bytes[bytes.size() - 2] == 0);
  CHECK(bytes[bytes.size() - 1] == 2);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK(error_kind([&] { decode_packed(truncated); }) == ErrorKind::truncation);
  auto bad_magic = bytes;
  bad_magic[1] = 'X';
  CHECK(error_kind([&] { decode_packed(bad_magic); }) == ErrorKind::format);
  auto swapped = bytes;
  std::swap(swapped[swapped.size() - 1], swapped[swapped.size() - 2]);
  CHECK(error_kind([&] { decode_packed(swapped); }) == ErrorKind::structure);
}
