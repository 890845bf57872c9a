// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <array>
#include <bit>

#include "pv_lattice/kernels.hpp"

namespace pvl::kernels {

namespace {

// exp(x) for x in [min_exponent, max_exponent]: x = n ln2 + r with
// |r| <= ln2/2, degree-13 Taylor polynomial in r, then scale by 2^n.
inline __m256d exp_pd(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  static constexpr std::array<double, 14> c = {
      1.0,
      1.0,
      1.0 / 2,
      1.0 / 6,
      1.0 / 24,
      1.0 / 120,
      1.0 / 720,
      1.0 / 5040,
      1.0 / 40320,
      1.0 / 362880,
      1.0 / 3628800,
      1.0 / 39916800,
      1.0 / 479001600,
      1.0 / 6227020800,
  };
  __m256d p = _mm256_set1_pd(c[13]);
  for (int i = 12; i >= 0; --i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[static_cast<std::size_t>(i)]));

  // n + 1.5 * 2^52 leaves n in the low mantissa bits (two's complement).
  const __m256d magic = _mm256_set1_pd(6755399441055744.0);
  const __m256i ni = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(n, magic)), _mm256_castpd_si256(magic));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

inline unsigned block(const double* v, const double* inv_alpha, const double* i0, double* current,
                      double* conductance) {
  const __m256d hi = _mm256_set1_pd(max_exponent);
  const __m256d lo = _mm256_set1_pd(min_exponent);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();

  const __m256d ia = _mm256_loadu_pd(inv_alpha);
  const __m256d s = _mm256_loadu_pd(i0);
  const __m256d x = _mm256_mul_pd(_mm256_loadu_pd(v), ia);
  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo), hi);
  const __m256d e = exp_pd(xc);

  const __m256d above = _mm256_cmp_pd(x, hi, _CMP_GT_OQ);
  const __m256d below = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  const __m256d over = _mm256_blendv_pd(zero, _mm256_sub_pd(x, hi), above);

  // Same association as the scalar kernel: (e - 1) + e * over.
  const __m256d cur = _mm256_mul_pd(s, _mm256_add_pd(_mm256_sub_pd(e, one), _mm256_mul_pd(e, over)));
  const __m256d g = _mm256_blendv_pd(_mm256_mul_pd(_mm256_mul_pd(s, e), ia), zero, below);
  _mm256_storeu_pd(current, cur);
  _mm256_storeu_pd(conductance, g);
  return static_cast<unsigned>(std::popcount(static_cast<unsigned>(_mm256_movemask_pd(above))));
}

}  // namespace

std::size_t junctions_avx2(const JunctionInputs& in, const JunctionOutputs& out) {
  const std::size_t n = in.v.size();
  std::size_t clamped = 0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    clamped += block(&in.v[k], &in.inv_alpha[k], &in.i0[k], &out.current[k], &out.conductance[k]);
  }
  if (k < n) {
    // Pad the tail so every element goes through the same vector exp.
    std::array<double, 4> v{}, ia{}, s{}, cur{}, g{};
    const std::size_t rest = n - k;
    for (std::size_t t = 0; t < rest; ++t) {
      v[t] = in.v[k + t];
      ia[t] = in.inv_alpha[k + t];
      s[t] = in.i0[k + t];
    }
    block(v.data(), ia.data(), s.data(), cur.data(), g.data());
    for (std::size_t t = 0; t < rest; ++t) {
      out.current[k + t] = cur[t];
      out.conductance[k + t] = g[t];
      clamped += v[t] * ia[t] > max_exponent;
    }
  }
  return clamped;
}

}  // namespace pvl::kernels
