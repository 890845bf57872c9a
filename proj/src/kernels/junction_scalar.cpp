#include <cmath>

#include "pv_lattice/kernels.hpp"

namespace pvl::kernels {

std::size_t junctions_scalar(const JunctionInputs& in, const JunctionOutputs& out) {
  std::size_t clamped = 0;
  const std::size_t n = in.v.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double x = in.v[k] * in.inv_alpha[k];
    const double xc = std::fmin(std::fmax(x, min_exponent), max_exponent);
    const double e = std::exp(xc);
    const double over = x > max_exponent ? x - max_exponent : 0.0;
    out.current[k] = in.i0[k] * ((e - 1.0) + e * over);
    out.conductance[k] = x < min_exponent ? 0.0 : in.i0[k] * e * in.inv_alpha[k];
    clamped += x > max_exponent;
  }
  return clamped;
}

}  // namespace pvl::kernels
