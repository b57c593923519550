#include "metacot/kernels.hpp"

#if defined(METACOT_BUILD_AVX2)
#include <immintrin.h>

namespace metacot::kernels {
namespace {

// Four independent accumulators, folded at the end. The tail is handled in
// scalar code so no masked loads are needed.
inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double sum_avx2(std::span<const double> x) {
  const std::size_t n = x.size();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x.data() + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double sum_sq_dev_avx2(std::span<const double> x, double m) {
  const std::size_t n = x.size();
  const __m256d vm = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x.data() + i), vm);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = x[i] - m;
    s += d * d;
  }
  return s;
}

double dot_centered_avx2(std::span<const double> x, std::span<const double> y, double mx,
                         double my) {
  const std::size_t n = x.size();
  const __m256d vmx = _mm256_set1_pd(mx);
  const __m256d vmy = _mm256_set1_pd(my);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(x.data() + i), vmx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(y.data() + i), vmy);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(dx, dy));
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += (x[i] - mx) * (y[i] - my);
  return s;
}

double sum_abs_diff_avx2(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x.data() + i), _mm256_loadu_pd(y.data() + i));
    acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign, d));
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d < 0 ? -d : d;
  }
  return s;
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{sum_avx2, sum_sq_dev_avx2, dot_centered_avx2, sum_abs_diff_avx2};
  return &table;
}

}  // namespace metacot::kernels

#else

namespace metacot::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace metacot::kernels

#endif
