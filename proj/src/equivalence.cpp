#include "pv_lattice/equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pvl {

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::photocurrent: return "photocurrent";
    case Condition::exponential: return "exponential";
    case Condition::saturation: return "saturation";
    case Condition::shunt: return "shunt";
    case Condition::series: return "series";
  }
  return "?";
}

bool EquivalenceReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const ConditionCheck& c) { return c.pass; });
}

namespace {

bool close(double a, double b, double rel_tol) {
  return std::abs(a - b) <= rel_tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace

bool is_uniform(const ArrayModel& model, double rel_tol) {
  const auto& ref = model.panels(0, 0);
  for (const auto& p : model.panels.values()) {
    if (!close(p.iph, ref.iph, rel_tol) || !close(p.i0, ref.i0, rel_tol) || !close(p.alpha, ref.alpha, rel_tol) ||
        !close(p.rs, ref.rs, rel_tol) || !close(p.rsh, ref.rsh, rel_tol))
      return false;
  }
  return true;
}

EquivalenceReport audit_subequalities(const ArrayModel& model, const ResolvedPanel& agg, const OperatingPoint& point,
                                      const AuditOptions& options) {
  // Only the panel rows: the sub-equalities do not depend on how the point
  // was driven.
  const auto r = assemble_residual(model, point.state);
  if (!(r.head(r.size() - 1).lpNorm<Eigen::Infinity>() <= options.converged_tol))
    throw std::invalid_argument("audit needs a converged operating point");

  const std::size_t m = model.m_p, n = model.n_p;
  EquivalenceReport rep;
  rep.uniform = is_uniform(model);
  rep.voltage = point.voltage();

  const auto sdm = solve_sdm_array(agg, VoltageDrive{rep.voltage}, model.block_diodes, options.newton);
  const double vd_a = sdm.state.vd(0, 0);
  const double vpv_a = sdm.state.vpv(0, 0);  // floating node when the block diode is open
  rep.sdm_diode_voltage = vd_a;

  const std::array<double, 5> lhs = {
      agg.iph,
      agg.i0 * std::exp(vd_a / agg.alpha),
      agg.i0,
      vd_a / agg.rsh,
      (vd_a - vpv_a) / agg.rs,
  };
  // Operating-point conditions also pass when the absolute error is below
  // rel_tol of the array photocurrent (both sides can approach zero).
  const std::array<bool, 5> point_dependent = {false, true, false, true, true};
  const double floor = options.rel_tol * agg.iph;

  for (std::size_t c = 0; c < 5; ++c) rep.checks[c].condition = kConditions[c];
  for (std::size_t i = 0; i < m; ++i) {
    std::array<double, 5> rhs{};
    for (std::size_t j = 0; j < n; ++j) {
      const auto& p = model.panels(i, j);
      const double vd = point.state.vd(i, j);
      const double u = vd - point.state.vpv(i + 1, j);
      rhs[0] += p.iph;
      rhs[1] += p.i0 * std::exp(u / p.alpha);
      rhs[2] += p.i0;
      rhs[3] += u / p.rsh;
      rhs[4] += (vd - point.state.vpv(i, j)) / p.rs;
    }
    for (std::size_t c = 0; c < 5; ++c) {
      auto& chk = rep.checks[c];
      const double err = std::abs(lhs[c] - rhs[c]);
      const double scale = std::max(std::abs(lhs[c]), std::abs(rhs[c]));
      const double rel = scale > 0.0 ? err / scale : 0.0;
      chk.max_abs = std::max(chk.max_abs, err);
      chk.max_rel = std::max(chk.max_rel, rel);
      const bool ok = rel <= options.rel_tol || (point_dependent[c] && err <= floor);
      chk.pass = chk.pass && ok;
    }
  }
  return rep;
}

AggregateInput build_aggregate_input(const EnvMap& env, const PanelParams& panel) {
  if (env.size() == 0) throw std::invalid_argument("environment map is empty");
  // Mean accumulated as offsets from the first panel: exact for constant maps.
  const EnvCondition first = env.values().front();
  double dg = 0.0, dt = 0.0;
  for (const auto& e : env.values()) {
    e.validate();
    dg += e.g - first.g;
    dt += e.t - first.t;
  }
  const double count = static_cast<double>(env.size());
  AggregateInput out;
  out.mean_env = {first.g + dg / count, first.t + dt / count};
  out.params = aggregate_panels_to_array(panel, static_cast<int>(env.rows()), static_cast<int>(env.cols()));
  out.resolved = resolve_panel(out.params, out.mean_env);
  return out;
}

}  // namespace pvl
