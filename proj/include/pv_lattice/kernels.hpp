#pragma once

// Batched Shockley junction evaluation: the data-parallel inner loop of
// residual and Jacobian assembly. One scalar reference kernel plus an AVX2
// variant, selected at runtime.

#include <cstddef>
#include <span>
#include <string_view>

namespace pvl::kernels {

// Exponent arguments are clamped to [min_exponent, max_exponent]. Above the
// upper clamp the characteristic continues linearly with the slope it has at
// the clamp; below the lower clamp it is flat.
inline constexpr double max_exponent = 60.0;
inline constexpr double min_exponent = -700.0;

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa);

struct JunctionInputs {
  std::span<const double> v;          // junction voltage (V)
  std::span<const double> inv_alpha;  // 1 / thermal voltage (1/V)
  std::span<const double> i0;         // saturation current (A)
};

struct JunctionOutputs {
  std::span<double> current;      // i0 * (exp(v/alpha) - 1), clamped
  std::span<double> conductance;  // d current / d v
};

/// Returns how many entries hit the upper exponent clamp.
using JunctionKernel = std::size_t (*)(const JunctionInputs&, const JunctionOutputs&);

std::size_t junctions_scalar(const JunctionInputs& in, const JunctionOutputs& out);
#if defined(PVL_HAVE_AVX2)
std::size_t junctions_avx2(const JunctionInputs& in, const JunctionOutputs& out);
#endif

bool available(Isa isa);

/// Best ISA the CPU supports, honouring PV_LATTICE_ISA=scalar|avx2 when set.
Isa detect();

Isa active();

/// Forces a kernel family; throws std::invalid_argument when unavailable.
void select(Isa isa);

JunctionKernel junction_kernel(Isa isa);

/// Dispatches to the active kernel. All spans must have equal length.
std::size_t evaluate_junctions(const JunctionInputs& in, const JunctionOutputs& out);

/// RAII override of the active ISA, restoring the previous one on exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active()) { select(isa); }
  ~ScopedIsa() { select(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

}  // namespace pvl::kernels
