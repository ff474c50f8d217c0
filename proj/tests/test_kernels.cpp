#include <doctest.h>

#include <bit>
#include <cmath>
#include <random>
#include <vector>

#include "swiftprune/kernels.hpp"
#include "test_util.hpp"

namespace k = swiftprune::kernels;

namespace {

// Sizes straddling every vector width, unroll and pairwise block boundary.
const std::vector<std::size_t> kSizes{0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 32, 33, 63, 64, 65, 127, 128, 129,
                                      255, 1000, 1024, 4097};

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

double naive_sum_squares(const std::vector<double>& x) {
  long double s = 0;
  for (double v : x) s += static_cast<long double>(v) * v;
  return static_cast<double>(s);
}

}  // namespace

TEST_CASE("scalar reference kernels on small inputs") {
  const auto& t = k::scalar();
  const std::vector<double> w{2.0, -3.0, 0.0};
  const std::vector<double> x{1.0, 0.0, 0.5};
  CHECK(t.sum_squares(x.data(), x.size()) == 1.25);

  std::vector<double> out(3);
  t.contribution_scores(w.data(), x.data(), 3, 4.0, out.data());
  CHECK(out[0] == doctest::Approx(8.0 / 3.0).epsilon(1e-15));
  CHECK(out[1] == 4.5);
  CHECK(out[2] == 0.0);

  // x^2 == S exactly: denominator 0, guarded.
  t.contribution_scores(w.data(), x.data(), 1, 1.0, out.data());
  CHECK(std::isinf(out[0]));

  t.magnitude_scores(w.data(), 3, out.data());
  CHECK(out == std::vector<double>{2.0, 3.0, 0.0});
  t.wanda_scores(w.data(), x.data(), 3, out.data());
  CHECK(out == std::vector<double>{2.0, 0.0, 0.0});

  const std::vector<double> w_hat{2.0, 0.0, 0.0};
  CHECK(t.residual_dot(w.data(), w_hat.data(), x.data(), 3) == 0.0);

  // 2:4 packed row [1,0,2,0] dotted with ones.
  const std::vector<double> values{1.0, 2.0};
  const std::vector<std::uint8_t> idx{0, 2};
  const std::vector<double> ones(4, 1.0);
  CHECK(t.packed_row_dot(values.data(), idx.data(), 2, 2, 4, ones.data()) == 3.0);
}

TEST_CASE("sum_squares is accurate against an extended-precision sum") {
  std::mt19937_64 rng(5);
  for (auto n : kSizes) {
    const auto x = testutil::gaussian(n, rng);
    const double ref = naive_sum_squares(x);
    const double got = k::scalar().sum_squares(x.data(), n);
    CHECK(std::fabs(got - ref) <= 1e-14 * std::max(ref, 1.0));
  }
}

TEST_CASE("AVX2 kernels match the scalar reference") {
  const auto* v = k::avx2();
  if (v == nullptr) {
    MESSAGE("AVX2 not available in this build or on this CPU; equivalence skipped");
    return;
  }
  const auto& s = k::scalar();
  std::mt19937_64 rng(9);
  for (auto n : kSizes) {
    CAPTURE(n);
    auto w = testutil::gaussian(n, rng, 0.02);
    auto x = testutil::gaussian(n, rng);
    auto w_hat = w;
    for (std::size_t i = 0; i < n; i += 3) w_hat[i] = 0.0;
    const double S = s.sum_squares(x.data(), n);

    // Reductions: same value to a few ulps.
    const double ss_s = s.sum_squares(x.data(), n);
    const double ss_v = v->sum_squares(x.data(), n);
    CHECK(std::fabs(ss_s - ss_v) <= 1e-14 * std::max(ss_s, 1e-300));
    const double rd_s = s.residual_dot(w.data(), w_hat.data(), x.data(), n);
    const double rd_v = v->residual_dot(w.data(), w_hat.data(), x.data(), n);
    double scale = 0;
    for (std::size_t i = 0; i < n; ++i) scale += std::fabs((w[i] - w_hat[i]) * x[i]);
    CHECK(std::fabs(rd_s - rd_v) <= 1e-14 * std::max(scale, 1e-300));

    // Elementwise: bit-identical, including the guard path.
    if (n > 0) x[n / 2] = std::sqrt(S);  // forces a guarded entry
    std::vector<double> a(n), b(n);
    s.contribution_scores(w.data(), x.data(), n, S, a.data());
    v->contribution_scores(w.data(), x.data(), n, S, b.data());
    bool identical = true;
    for (std::size_t i = 0; i < n; ++i) identical = identical && same_bits(a[i], b[i]);
    CHECK(identical);

    s.magnitude_scores(w.data(), n, a.data());
    v->magnitude_scores(w.data(), n, b.data());
    CHECK(a == b);
    s.wanda_scores(w.data(), x.data(), n, a.data());
    v->wanda_scores(w.data(), x.data(), n, b.data());
    CHECK(a == b);
  }
}

TEST_CASE("AVX2 packed_row_dot matches the scalar reference") {
  const auto* v = k::avx2();
  if (v == nullptr) return;
  std::mt19937_64 rng(13);
  for (auto [n_keep, m] : {std::pair<std::size_t, std::size_t>{2, 4}, {4, 8}, {1, 4}, {3, 8}, {5, 16}}) {
    for (std::size_t groups : {1, 2, 3, 7, 64, 257}) {
      std::vector<double> values = testutil::gaussian(groups * n_keep, rng);
      std::vector<std::uint8_t> idx;
      for (std::size_t g = 0; g < groups; ++g) {
        std::vector<std::uint8_t> pos(m);
        for (std::size_t j = 0; j < m; ++j) pos[j] = static_cast<std::uint8_t>(j);
        std::shuffle(pos.begin(), pos.end(), rng);
        std::sort(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_keep));
        idx.insert(idx.end(), pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_keep));
      }
      const auto vec = testutil::gaussian(groups * m, rng);
      const double a = k::scalar().packed_row_dot(values.data(), idx.data(), values.size(), n_keep, m, vec.data());
      const double b = v->packed_row_dot(values.data(), idx.data(), values.size(), n_keep, m, vec.data());
      double scale = 0;
      for (std::size_t i = 0; i < values.size(); ++i) scale += std::fabs(values[i]);
      CHECK(std::fabs(a - b) <= 1e-13 * std::max(scale, 1.0));
    }
  }
}

TEST_CASE("active table is one of the compiled variants") {
  const auto& t = k::active();
  const bool known = &t == &k::scalar() || (k::avx2() != nullptr && &t == k::avx2());
  CHECK(known);
}
