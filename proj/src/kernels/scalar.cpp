#include <cmath>

#include "metacot/kernels.hpp"

namespace metacot::kernels {
namespace {

double sum_scalar(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

double sum_sq_dev_scalar(std::span<const double> x, double m) {
  double s = 0.0;
  for (double v : x) {
    const double d = v - m;
    s += d * d;
  }
  return s;
}

double dot_centered_scalar(std::span<const double> x, std::span<const double> y, double mx,
                           double my) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
  return s;
}

double sum_abs_diff_scalar(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::fabs(x[i] - y[i]);
  return s;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{sum_scalar, sum_sq_dev_scalar, dot_centered_scalar,
                                 sum_abs_diff_scalar};
  return table;
}

}  // namespace metacot::kernels
