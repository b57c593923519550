#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Reduction kernels behind the statistics code. Each kernel has a scalar
// reference implementation and, where the CPU supports it, an AVX2 variant.
// The active variant is picked once at startup and can be forced with the
// METACOT_SIMD environment variable ("scalar" or "avx2").
namespace metacot::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  double (*sum)(std::span<const double>);
  // sum_i (x_i - mean)^2
  double (*sum_sq_dev)(std::span<const double>, double mean);
  // sum_i (x_i - mx)(y_i - my)
  double (*dot_centered)(std::span<const double>, std::span<const double>, double mx, double my);
  // sum_i |x_i - y_i|
  double (*sum_abs_diff)(std::span<const double>, std::span<const double>);
};

const KernelTable& scalar_table();
/// Null when the build does not include the AVX2 translation unit.
const KernelTable* avx2_table();

bool cpu_has_avx2();
Isa active_isa();
std::string_view isa_name(Isa isa);
/// Overrides runtime selection; throws PreconditionError if unsupported.
void force_isa(Isa isa);
const KernelTable& active();

inline double sum(std::span<const double> x) { return active().sum(x); }
inline double mean(std::span<const double> x) {
  return x.empty() ? 0.0 : sum(x) / static_cast<double>(x.size());
}
inline double sum_sq_dev(std::span<const double> x, double m) { return active().sum_sq_dev(x, m); }
inline double dot_centered(std::span<const double> x, std::span<const double> y, double mx,
                           double my) {
  return active().dot_centered(x, y, mx, my);
}
inline double sum_abs_diff(std::span<const double> x, std::span<const double> y) {
  return active().sum_abs_diff(x, y);
}

}  // namespace metacot::kernels
