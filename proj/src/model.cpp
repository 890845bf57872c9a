#include "pv_lattice/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pvl {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void require_counts(int a, int b) {
  require(a >= 1 && b >= 1, "series/parallel counts must be >= 1");
}

}  // namespace

void PanelParams::validate() const {
  require(std::isfinite(iph_ref) && iph_ref > 0.0, "iph_ref must be > 0");
  require(std::isfinite(i0_ref) && i0_ref > 0.0, "i0_ref must be > 0");
  require(ideality >= 0.5 && ideality <= 2.5, "ideality must lie in [0.5, 2.5]");
  require(std::isfinite(rs) && rs > 0.0, "rs must be > 0");
  require(std::isfinite(rsh_ref) && rsh_ref > 0.0, "rsh_ref must be > 0");
  require(m_c >= 1 && n_c >= 1, "m_c and n_c must be >= 1");
  require(std::isfinite(gamma_t), "gamma_t must be finite");
  require(std::isfinite(g_ref) && g_ref > 0.0, "g_ref must be > 0");
  require(std::isfinite(t_ref) && t_ref > 0.0, "t_ref must be > 0");
  require(std::isfinite(eg_ref) && eg_ref > 0.0, "eg_ref must be > 0");
}

void EnvCondition::validate() const {
  require(std::isfinite(g) && g >= 0.0, "irradiance must be >= 0");
  require(std::isfinite(t) && t > 0.0, "temperature must be > 0");
}

PanelParams with_default_band_gap(PanelParams p) {
  p.eg_ref = band_gap(p.t_ref);
  return p;
}

PanelParams et_m672395() { return with_default_band_gap(PanelParams{}); }

DiodeParams bypass_diode(double threshold, double temperature, double reference_current) {
  require(threshold > 0.0 && temperature > 0.0 && reference_current > 0.0,
          "bypass diode threshold, temperature and current must be > 0");
  DiodeParams d;
  d.alpha = constants::k * temperature / constants::q;
  d.i0 = reference_current / std::expm1(threshold / d.alpha);
  return d;
}

void ArrayModel::validate() const {
  require(m_p >= 1 && n_p >= 1, "array needs at least one panel");
  require(panels.rows() == m_p && panels.cols() == n_p, "panel grid does not match m_p x n_p");
  for (const auto& p : panels.values()) {
    require(p.alpha > 0.0 && p.i0 > 0.0 && p.rs > 0.0 && p.rsh > 0.0 && p.iph >= 0.0,
            "resolved panel parameters out of range");
  }
  if (bypass) require(bypass->i0 > 0.0 && bypass->alpha > 0.0, "bypass diode parameters must be > 0");
  if (const auto* z = std::get_if<ImpedanceDrive>(&drive)) {
    require(std::isfinite(z->z_load) && z->z_load > 0.0, "z_load must be > 0");
  } else {
    require(std::isfinite(std::get<VoltageDrive>(drive).v_set), "drive voltage must be finite");
  }
}

ArrayModel make_array(const PanelParams& panel, const EnvMap& env,
                      std::optional<DiodeParams> bypass, bool block_diodes, Drive drive) {
  require(env.size() > 0, "environment map is empty");
  ArrayModel model;
  model.m_p = env.rows();
  model.n_p = env.cols();
  model.panels = Grid<ResolvedPanel>(env.rows(), env.cols());
  for (std::size_t i = 0; i < env.rows(); ++i)
    for (std::size_t j = 0; j < env.cols(); ++j) model.panels(i, j) = resolve_panel(panel, env(i, j));
  model.bypass = bypass;
  model.block_diodes = block_diodes;
  model.drive = drive;
  model.validate();
  return model;
}

ArrayModel make_lumped(const ResolvedPanel& lumped, bool block_diode, Drive drive) {
  ArrayModel model;
  model.panels = Grid<ResolvedPanel>(1, 1, lumped);
  model.block_diodes = block_diode;
  model.drive = drive;
  model.validate();
  return model;
}

PanelParams aggregate_cells_to_panel(const PanelParams& cell, int m_c, int n_c) {
  require_counts(m_c, n_c);
  PanelParams p = cell;
  const double ratio = static_cast<double>(m_c) / n_c;
  p.iph_ref = cell.iph_ref * n_c;
  // Parallel cells add their saturation currents; the printed relation
  // I0_cell = n_c * I0_panel is read in this physical direction.
  p.i0_ref = cell.i0_ref * n_c;
  p.rs = cell.rs * ratio;
  p.rsh_ref = cell.rsh_ref * ratio;
  p.m_c = cell.m_c * m_c;
  p.n_c = cell.n_c * n_c;
  return p;
}

PanelParams aggregate_panels_to_array(const PanelParams& panel, int m_p, int n_p) {
  // Same scaling laws one level up.
  return aggregate_cells_to_panel(panel, m_p, n_p);
}

double photocurrent(const PanelParams& p, const EnvCondition& env) {
  env.validate();
  return p.iph_ref * (env.g / p.g_ref) * (1.0 + p.gamma_t * (env.t - p.t_ref));
}

double band_gap(double t) {
  require(std::isfinite(t) && t > 0.0, "band gap temperature must be > 0");
  require(std::abs(t - 1108.0) > 1e-6, "band gap formula is singular at 1108 K");
  return 1.16 - 7.02e-4 * (t * t / (t - 1108.0));
}

double saturation_current(const PanelParams& p, double t) {
  require(std::isfinite(t) && t > 0.0, "temperature must be > 0");
  const double exponent = p.eg_ref / (constants::k_ev * p.t_ref) - band_gap(t) / (constants::k_ev * t);
  if (std::abs(exponent) > 700.0)
    throw std::range_error("saturation current exponent overflows at T = " + std::to_string(t) + " K");
  const double ratio = t / p.t_ref;
  return p.i0_ref * ratio * ratio * ratio * std::exp(exponent);
}

double shunt_resistance(const PanelParams& p, double g) {
  require(std::isfinite(g) && g > 0.0, "shunt resistance needs irradiance > 0");
  return p.rsh_ref * (g / p.g_ref);
}

double thermal_voltage(const PanelParams& p, double t) {
  return p.ideality * constants::k * t * p.m_c / constants::q;
}

ResolvedPanel resolve_panel(const PanelParams& p, const EnvCondition& env) {
  p.validate();
  env.validate();
  ResolvedPanel r;
  r.iph = photocurrent(p, env);
  r.i0 = saturation_current(p, env.t);
  r.alpha = thermal_voltage(p, env.t);
  r.rs = p.rs;
  r.rsh = shunt_resistance(p, std::max(env.g, constants::min_shunt_irradiance));
  if (r.iph < 0.0)
    throw std::invalid_argument("photocurrent is negative; gamma_t * (t - t_ref) < -1");
  return r;
}

double open_circuit_voltage(const ResolvedPanel& p) {
  // f(v) = iph - i0 (exp(v/alpha) - 1) - v/rsh is strictly decreasing.
  auto f = [&](double v) { return p.iph - p.i0 * std::expm1(v / p.alpha) - v / p.rsh; };
  if (p.iph <= 0.0) return 0.0;
  double lo = 0.0;
  double hi = p.alpha * std::log1p(p.iph / p.i0);
  double v = hi;
  for (int it = 0; it < 100; ++it) {
    const double fv = f(v);
    if (fv > 0.0) lo = v; else hi = v;
    const double df = -p.i0 * std::exp(v / p.alpha) / p.alpha - 1.0 / p.rsh;
    double next = v - fv / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - v) <= 1e-13 * std::max(1.0, std::abs(v))) return next;
    v = next;
  }
  return v;
}

}  // namespace pvl
