#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "pv_lattice/kernels.hpp"

namespace pvl::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(PVL_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__)) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{detect()};
  return slot;
}

}  // namespace

std::string_view to_string(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool available(Isa isa) {
  if (isa == Isa::scalar) return true;
  static const bool has = cpu_has_avx2();
  return has;
}

Isa detect() {
  if (const char* env = std::getenv("PV_LATTICE_ISA")) {
    const std::string want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && available(Isa::avx2)) return Isa::avx2;
  }
  return available(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

Isa active() { return active_slot().load(std::memory_order_relaxed); }

void select(Isa isa) {
  if (!available(isa)) throw std::invalid_argument("kernel ISA not available: " + std::string(to_string(isa)));
  active_slot().store(isa, std::memory_order_relaxed);
}

JunctionKernel junction_kernel(Isa isa) {
#if defined(PVL_HAVE_AVX2)
  if (isa == Isa::avx2) return &junctions_avx2;
#endif
  (void)isa;
  return &junctions_scalar;
}

std::size_t evaluate_junctions(const JunctionInputs& in, const JunctionOutputs& out) {
  const std::size_t n = in.v.size();
  if (in.inv_alpha.size() != n || in.i0.size() != n || out.current.size() != n || out.conductance.size() != n)
    throw std::invalid_argument("junction batch spans differ in length");
  return junction_kernel(active())(in, out);
}

}  // namespace pvl::kernels
