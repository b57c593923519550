#include <atomic>
#include <cstdlib>
#include <string>

#include "metacot/error.hpp"
#include "metacot/kernels.hpp"

namespace metacot::kernels {
namespace {

Isa detect() {
  if (const char* env = std::getenv("METACOT_SIMD")) {
    const std::string want = env;
    if (want == "scalar") return Isa::Scalar;
    if (want == "avx2" && avx2_table() != nullptr && cpu_has_avx2()) return Isa::Avx2;
  }
  return (avx2_table() != nullptr && cpu_has_avx2()) ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& selected() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Isa active_isa() { return selected().load(std::memory_order_relaxed); }

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

void force_isa(Isa isa) {
  if (isa == Isa::Avx2 && (avx2_table() == nullptr || !cpu_has_avx2())) {
    throw PreconditionError("AVX2 kernels are not available on this build or CPU");
  }
  selected().store(isa, std::memory_order_relaxed);
}

const KernelTable& active() {
  return active_isa() == Isa::Avx2 ? *avx2_table() : scalar_table();
}

}  // namespace metacot::kernels
