#include "swiftprune/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace swiftprune::kernels {

#if defined(SWIFTPRUNE_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

const KernelTable* avx2() {
#if defined(SWIFTPRUNE_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable& table = [] () -> const KernelTable& {
    const char* env = std::getenv("SWIFTPRUNE_KERNELS");
    if (env != nullptr && std::string_view(env) == "scalar") return scalar();
    if (const auto* t = avx2()) return *t;
    return scalar();
  }();
  return table;
}

double sum_squares(std::span<const double> x) { return active().sum_squares(x.data(), x.size()); }

void contribution_scores(std::span<const double> w, std::span<const double> x, double s, std::span<double> out) {
  active().contribution_scores(w.data(), x.data(), w.size(), s, out.data());
}

void magnitude_scores(std::span<const double> w, std::span<double> out) {
  active().magnitude_scores(w.data(), w.size(), out.data());
}

void wanda_scores(std::span<const double> w, std::span<const double> x, std::span<double> out) {
  active().wanda_scores(w.data(), x.data(), w.size(), out.data());
}

double residual_dot(std::span<const double> w, std::span<const double> w_hat, std::span<const double> x) {
  return active().residual_dot(w.data(), w_hat.data(), x.data(), w.size());
}

}  // namespace swiftprune::kernels
