#include "pv_lattice/mppt.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <stdexcept>

namespace pvl {

MppResult sdm_mpp(const ResolvedPanel& a) {
  if (!(a.alpha > 0.0 && a.i0 > 0.0 && a.rs > 0.0 && a.rsh > 0.0) || !(a.iph > 0.0))
    throw std::invalid_argument("sdm_mpp needs positive parameters and photocurrent");

  // Along the characteristic, with chi = exp(vd/alpha):
  //   I(vd) = iph - i0 (chi - 1) - vd/rsh,  V(vd) = vd - I rs
  // and the MPP closed form I = V (i0 rsh chi + alpha) / (i0 rs rsh chi + alpha (rs + rsh))
  // gives F(vd) = I A - V B = 0 with A, B the denominator and numerator factor.
  struct Eval {
    double f, df, i, v;
  };
  auto eval = [&](double vd) {
    const double chi = std::exp(vd / a.alpha);
    const double i = a.iph - a.i0 * (chi - 1.0) - vd / a.rsh;
    const double v = vd - i * a.rs;
    const double A = a.i0 * a.rs * a.rsh * chi + a.alpha * (a.rs + a.rsh);
    const double B = a.i0 * a.rsh * chi + a.alpha;
    const double g = a.i0 * chi / a.alpha + 1.0 / a.rsh;
    const double dA = a.i0 * a.rs * a.rsh * chi / a.alpha;
    const double dB = a.i0 * a.rsh * chi / a.alpha;
    const double df = -g * A + i * dA - (1.0 + a.rs * g) * B - v * dB;
    return Eval{i * A - v * B, df, i, v};
  };

  // Short circuit: V = 0, vd = I rs; open circuit: I = 0, vd = Voc.
  // F > 0 at the first and < 0 at the second.
  double hi = open_circuit_voltage(a);
  double lo = 0.0;
  {
    // vd at short circuit solves vd = rs (iph - i0 (exp(vd/alpha)-1) - vd/rsh).
    double vd = a.iph * a.rs;
    for (int it = 0; it < 60; ++it) {
      const double chi = std::exp(vd / a.alpha);
      const double h = vd - a.rs * (a.iph - a.i0 * (chi - 1.0) - vd / a.rsh);
      const double dh = 1.0 + a.rs * (a.i0 * chi / a.alpha + 1.0 / a.rsh);
      const double next = vd - h / dh;
      if (std::abs(next - vd) < 1e-15) break;
      vd = next;
    }
    lo = vd;
  }
  if (!(eval(lo).f > 0.0 && eval(hi).f < 0.0))
    throw std::domain_error("sdm_mpp: no stationary point between short and open circuit");

  double vd = 0.5 * (lo + hi);
  int iters = 0;
  for (; iters < 200; ++iters) {
    const Eval e = eval(vd);
    if (e.f > 0.0) lo = vd; else hi = vd;
    double next = vd - e.f / e.df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - vd) <= 1e-14 * std::max(1.0, std::abs(vd))) {
      vd = next;
      break;
    }
    vd = next;
  }
  const Eval e = eval(vd);
  MppResult r;
  r.v_mpp = e.v;
  r.i_mpp = e.i;
  r.p_mpp = r.v_mpp * r.i_mpp;
  r.model_tag = ModelTag::sdm_a;
  r.refinement_iters = iters;
  return r;
}

MppResult ppdm_mpp(const ArrayModel& model, const PpdmMppOptions& options) {
  if (options.coarse_points < 3) throw std::invalid_argument("ppdm_mpp needs at least 3 coarse points");
  if (!(options.v_tol > 0.0)) throw std::invalid_argument("ppdm_mpp needs v_tol > 0");
  TraceOptions trace;
  trace.n_points = options.coarse_points;
  trace.newton = options.newton;
  const IVCurve coarse = trace_iv(model, trace);

  std::size_t best = 0;
  for (std::size_t k = 1; k < coarse.samples.size(); ++k)
    if (coarse.samples[k].p > coarse.samples[best].p) best = k;

  const auto& s = coarse.samples;
  double a = s[best == 0 ? 0 : best - 1].v;
  double b = s[std::min(best + 1, s.size() - 1)].v;

  std::optional<SolverState> warm;
  auto power = [&](double v) {
    try {
      const auto op = solve_operating_point(with_voltage(model, v), options.newton, warm);
      warm = op.state;
      return std::pair{op.current() * v, op.current()};
    } catch (const SolverError& e) {
      throw SweepError(std::string(e.what()) + " during MPP refinement in [" + std::to_string(a) + ", " +
                           std::to_string(b) + "] V",
                       v);
    }
  };

  MppResult r;
  r.model_tag = ModelTag::ppdm_a;
  r.v_mpp = s[best].v;
  r.i_mpp = s[best].i;
  r.p_mpp = s[best].p;

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  auto [pc, ic] = power(c);
  auto [pd, id] = power(d);
  auto keep = [&](double v, double p, double i) {
    if (p > r.p_mpp) {
      r.p_mpp = p;
      r.v_mpp = v;
      r.i_mpp = i;
    }
  };
  keep(c, pc, ic);
  keep(d, pd, id);
  while (b - a > options.v_tol) {
    ++r.refinement_iters;
    if (pc > pd) {
      b = d;
      d = c;
      pd = pc;
      id = ic;
      c = b - inv_phi * (b - a);
      std::tie(pc, ic) = power(c);
      keep(c, pc, ic);
    } else {
      a = c;
      c = d;
      pc = pd;
      ic = id;
      d = a + inv_phi * (b - a);
      std::tie(pd, id) = power(d);
      keep(d, pd, id);
    }
  }
  r.p_mpp = r.v_mpp * r.i_mpp;
  return r;
}

ModelComparison compare_models(const MppResult& sdm, const MppResult& ppdm) {
  if (ppdm.p_mpp == 0.0 || ppdm.v_mpp == 0.0 || ppdm.i_mpp == 0.0)
    throw std::invalid_argument("compare_models: PPDM baseline quantity is zero");
  auto pct = [](double x, double base) { return 100.0 * (x - base) / base; };
  return {pct(sdm.p_mpp, ppdm.p_mpp), pct(sdm.v_mpp, ppdm.v_mpp), pct(sdm.i_mpp, ppdm.i_mpp)};
}

}  // namespace pvl
