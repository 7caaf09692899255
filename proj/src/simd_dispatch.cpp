#include "hnoseg/simd.hpp"

#include <cstdlib>
#include <cstring>

#if defined(__x86_64__)
#include <cpuid.h>
#endif

namespace hnoseg::simd {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__)
  unsigned eax = 0, ebx = 0, ecx = 0, edx = 0;
  if (__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx) == 0) return false;
  return (ebx & bit_AVX2) != 0;
#else
  return false;
#endif
}

struct Selection {
  const Kernels* kernels;
  const char* name;
};

Selection select() {
  const char* force = std::getenv("HNOSEG_SIMD");
  if (force != nullptr && std::strcmp(force, "scalar") == 0) {
    return {&scalar_kernels(), "scalar"};
  }
#if defined(__x86_64__)
  if (cpu_has_avx2() &&
      (force == nullptr || std::strcmp(force, "avx2") == 0)) {
    return {&avx2_kernels(), "avx2"};
  }
#endif
  return {&scalar_kernels(), "scalar"};
}

const Selection& selection() {
  static const Selection s = select();
  return s;
}

}  // namespace

const Kernels& active() { return *selection().kernels; }
const char* active_name() { return selection().name; }

}  // namespace hnoseg::simd
