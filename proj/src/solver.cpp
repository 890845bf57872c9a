#include "pv_lattice/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pv_lattice/kernels.hpp"

namespace pvl {

namespace {

constexpr std::ptrdiff_t kGround = -1;
constexpr std::ptrdiff_t kNone = -1;

// Hysteresis on releasing a blocked string: its floating terminal must rise
// this far above the array terminal before it is reconnected.
constexpr double kUnblockMargin = 1e-9;

struct Layout {
  std::size_t m, n;

  std::size_t mn() const { return m * n; }
  std::size_t size() const { return 2 * mn() + 1; }
  std::ptrdiff_t vd(std::size_t i, std::size_t j) const { return static_cast<std::ptrdiff_t>(j * m + i); }
  std::ptrdiff_t interior(std::size_t i, std::size_t j) const {
    return static_cast<std::ptrdiff_t>(mn() + j * (m - 1) + (i - 1));
  }
  std::ptrdiff_t slot(std::size_t j) const { return static_cast<std::ptrdiff_t>(mn() + (m - 1) * n + j); }
  std::ptrdiff_t varr() const { return static_cast<std::ptrdiff_t>(2 * mn()); }

  std::ptrdiff_t row_nd(std::size_t i, std::size_t j) const { return static_cast<std::ptrdiff_t>(j * m + i); }
  std::ptrdiff_t row_np(std::size_t i, std::size_t j) const { return static_cast<std::ptrdiff_t>(mn() + j * m + i); }
  std::ptrdiff_t row_array() const { return varr(); }

  // Unknown index carrying the top terminal of panel (i,j).
  std::ptrdiff_t top(std::size_t i, std::size_t j, bool blocked) const {
    if (i > 0) return interior(i, j);
    return blocked ? slot(j) : varr();
  }
  std::ptrdiff_t bottom(std::size_t i, std::size_t j) const { return i + 1 < m ? interior(i + 1, j) : kGround; }
  std::ptrdiff_t current(std::size_t j, bool blocked) const { return blocked ? kNone : slot(j); }
};

Layout layout_of(const ArrayModel& model) { return {model.m_p, model.n_p}; }

void check_dims(const ArrayModel& model, const SolverState& s) {
  const auto m = model.m_p, n = model.n_p;
  if (s.vd.rows() != m || s.vd.cols() != n || s.vpv.rows() != m + 1 || s.vpv.cols() != n || s.iout.size() != n ||
      s.blocked.size() != n)
    throw std::invalid_argument("solver state dimensions do not match the array model");
}

struct Junctions {
  std::vector<double> v, inv_alpha, i0, current, conductance;
  std::size_t clamped = 0;
};

// Evaluates the residual and, when `triplets` is non-null, the Jacobian.
// All nodal values are read from `x` through the layout.
void evaluate(const ArrayModel& model, const Eigen::VectorXd& x, const std::vector<bool>& blocked,
              Eigen::VectorXd* residual, std::vector<Eigen::Triplet<double>>* triplets, std::size_t* clamped) {
  const Layout L = layout_of(model);
  const std::size_t m = L.m, n = L.n, mn = L.mn();
  const bool bypass = model.bypass.has_value();

  auto value = [&](std::ptrdiff_t idx) { return idx < 0 ? 0.0 : x[idx]; };

  Junctions jn;
  const std::size_t count = bypass ? 2 * mn : mn;
  jn.v.resize(count);
  jn.inv_alpha.resize(count);
  jn.i0.resize(count);
  jn.current.resize(count);
  jn.conductance.resize(count);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      const auto& p = model.panels(i, j);
      const std::size_t k = j * m + i;
      const double vt = value(L.top(i, j, blocked[j]));
      const double vb = value(L.bottom(i, j));
      jn.v[k] = value(L.vd(i, j)) - vb;
      jn.inv_alpha[k] = 1.0 / p.alpha;
      jn.i0[k] = p.i0;
      if (bypass) {
        jn.v[mn + k] = vb - vt;
        jn.inv_alpha[mn + k] = 1.0 / model.bypass->alpha;
        jn.i0[mn + k] = model.bypass->i0;
      }
    }
  }
  jn.clamped = kernels::evaluate_junctions({jn.v, jn.inv_alpha, jn.i0}, {jn.current, jn.conductance});
  if (clamped) *clamped = jn.clamped;

  Eigen::VectorXd& r = *residual;
  r.resize(static_cast<Eigen::Index>(L.size()));

  auto add = [&](std::ptrdiff_t row, std::ptrdiff_t col, double v) {
    if (triplets && col >= 0) triplets->emplace_back(row, col, v);
  };

  double array_current = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const bool b = blocked[j];
    const std::ptrdiff_t ic = L.current(j, b);
    const double iout = value(ic);
    if (!b) array_current += iout;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& p = model.panels(i, j);
      const std::size_t k = j * m + i;
      const std::ptrdiff_t cd = L.vd(i, j), ct = L.top(i, j, b), cb = L.bottom(i, j);
      const double vd = x[cd], vt = value(ct);
      const double u = jn.v[k];
      const double gs = 1.0 / p.rs, gsh = 1.0 / p.rsh, gd = jn.conductance[k];

      const std::ptrdiff_t nd = L.row_nd(i, j);
      r[nd] = p.iph - jn.current[k] - u * gsh - (vd - vt) * gs;
      add(nd, cd, -gd - gsh - gs);
      add(nd, cb, gd + gsh);
      add(nd, ct, gs);

      const std::ptrdiff_t np = L.row_np(i, j);
      double rnp = (vd - vt) * gs - iout;
      add(np, cd, gs);
      add(np, ic, -1.0);
      if (bypass) {
        const double gb = jn.conductance[mn + k];
        rnp += jn.current[mn + k];
        add(np, ct, -gs - gb);
        add(np, cb, gb);
      } else {
        add(np, ct, -gs);
      }
      r[np] = rnp;
    }
  }

  const std::ptrdiff_t ra = L.row_array();
  if (const auto* z = std::get_if<ImpedanceDrive>(&model.drive)) {
    r[ra] = array_current - x[L.varr()] / z->z_load;
    for (std::size_t j = 0; j < n; ++j) add(ra, L.current(j, blocked[j]), 1.0);
    add(ra, L.varr(), -1.0 / z->z_load);
  } else {
    r[ra] = x[L.varr()] - std::get<VoltageDrive>(model.drive).v_set;
    add(ra, L.varr(), 1.0);
  }
}

Eigen::SparseMatrix<double> to_sparse(std::size_t size, const std::vector<Eigen::Triplet<double>>& t) {
  Eigen::SparseMatrix<double> J(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
  J.setFromTriplets(t.begin(), t.end());
  J.makeCompressed();
  return J;
}

double inf_norm(const Eigen::VectorXd& r, Eigen::Index* worst = nullptr) {
  Eigen::Index w = 0;
  double norm = 0.0;
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    const double a = std::abs(r[k]);
    if (!(a <= norm)) {  // also catches NaN
      norm = std::isnan(a) ? std::numeric_limits<double>::infinity() : a;
      w = k;
    }
  }
  if (worst) *worst = w;
  return norm;
}

double max_junction_step(const Layout& L, const Eigen::VectorXd& dx, const std::vector<bool>& blocked, bool bypass) {
  auto d = [&](std::ptrdiff_t idx) { return idx < 0 ? 0.0 : dx[idx]; };
  double worst = 0.0;
  for (std::size_t j = 0; j < L.n; ++j) {
    for (std::size_t i = 0; i < L.m; ++i) {
      const double db = d(L.bottom(i, j));
      worst = std::max(worst, std::abs(d(L.vd(i, j)) - db));
      if (bypass) worst = std::max(worst, std::abs(db - d(L.top(i, j, blocked[j]))));
    }
  }
  return worst;
}

struct FixedSetResult {
  double norm = 0.0;
  int iterations = 0;
  std::size_t clamped = 0;
};

FixedSetResult newton(const ArrayModel& model, const NewtonOptions& opt, Eigen::VectorXd& x,
                      const std::vector<bool>& blocked) {
  const Layout L = layout_of(model);
  double vd_limit = opt.vd_limit;
  if (vd_limit <= 0.0) {
    double min_alpha = std::numeric_limits<double>::infinity();
    for (const auto& p : model.panels.values()) min_alpha = std::min(min_alpha, p.alpha);
    vd_limit = 2.0 * min_alpha;
  }

  Eigen::VectorXd r, r_try, x_try;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(12 * L.mn() + 2 * L.n + 2);
  FixedSetResult out;
  evaluate(model, x, blocked, &r, nullptr, &out.clamped);
  double norm = inf_norm(r);

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool analyzed = false;

  // Returns false when no candidate step lowered the norm.
  auto step = [&](bool polish) -> bool {
    triplets.clear();
    evaluate(model, x, blocked, &r, &triplets, nullptr);
    const auto J = to_sparse(L.size(), triplets);
    if (!analyzed) {
      lu.analyzePattern(J);
      analyzed = true;
    }
    lu.factorize(J);
    if (lu.info() != Eigen::Success)
      throw SolverError(SolverError::Kind::singular_jacobian,
                        "singular Jacobian: degenerate panel parameters or floating nodes", norm);
    const Eigen::VectorXd dx = lu.solve(-r);
    if (!dx.allFinite())
      throw SolverError(SolverError::Kind::singular_jacobian, "Newton step is not finite", norm);

    double lambda = 1.0;
    const double js = max_junction_step(L, dx, blocked, model.bypass.has_value());
    if (!polish && js > vd_limit) lambda = vd_limit / js;

    double best_norm = std::numeric_limits<double>::infinity();
    double best_lambda = lambda;
    std::size_t best_clamped = 0;
    const int tries = polish ? 1 : opt.damping + 1;
    for (int h = 0; h < tries; ++h, lambda *= 0.5) {
      x_try = x + lambda * dx;
      std::size_t c = 0;
      evaluate(model, x_try, blocked, &r_try, nullptr, &c);
      const double nt = inf_norm(r_try);
      if (nt < best_norm) {
        best_norm = nt;
        best_lambda = lambda;
        best_clamped = c;
      }
      if (nt < norm) break;
    }
    if (polish && !(best_norm < norm)) return false;
    // With no decrease, take the best trial step anyway so the iteration can
    // leave a plateau; max_iters bounds the cost.
    x += best_lambda * dx;
    const bool improved = best_norm < norm;
    norm = best_norm;
    out.clamped = best_clamped;
    return improved;
  };

  for (; out.iterations < opt.max_iters && !(norm <= opt.tol); ++out.iterations) step(false);

  if (!(norm <= opt.tol)) {
    evaluate(model, x, blocked, &r, nullptr, nullptr);
    Eigen::Index worst = 0;
    const double n = inf_norm(r, &worst);
    throw SolverError(SolverError::Kind::max_iterations,
                      "Newton did not converge in " + std::to_string(opt.max_iters) +
                          " iterations (residual " + std::to_string(n) + " A at equation " +
                          std::to_string(worst) + ")",
                      n, worst);
  }
  // One quadratic step past the tolerance makes results independent of the
  // path taken to reach it.
  step(true);
  out.norm = norm;
  return out;
}

}  // namespace

SolverState SolverState::zeros(std::size_t m, std::size_t n) {
  SolverState s;
  s.vd = Grid<double>(m, n, 0.0);
  s.vpv = Grid<double>(m + 1, n, 0.0);
  s.iout.assign(n, 0.0);
  s.blocked.assign(n, false);
  return s;
}

void NewtonOptions::validate() const {
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be > 0");
  if (damping < 0) throw std::invalid_argument("damping must be >= 0");
}

double OperatingPoint::current() const {
  return std::accumulate(state.iout.begin(), state.iout.end(), 0.0);
}

Diode shockley_current(const DiodeParams& d, double v) {
  const double inv_alpha = 1.0 / d.alpha;
  Diode out;
  kernels::junctions_scalar({std::span(&v, 1), std::span(&inv_alpha, 1), std::span(&d.i0, 1)},
                            {std::span(&out.current, 1), std::span(&out.conductance, 1)});
  out.clamped = v * inv_alpha > kernels::max_exponent;
  return out;
}

std::size_t unknown_count(const ArrayModel& model) { return layout_of(model).size(); }

Eigen::VectorXd pack(const ArrayModel& model, const SolverState& s) {
  check_dims(model, s);
  const Layout L = layout_of(model);
  Eigen::VectorXd x(static_cast<Eigen::Index>(L.size()));
  for (std::size_t j = 0; j < L.n; ++j) {
    for (std::size_t i = 0; i < L.m; ++i) {
      x[L.vd(i, j)] = s.vd(i, j);
      if (i > 0) x[L.interior(i, j)] = s.vpv(i, j);
    }
    x[L.slot(j)] = s.blocked[j] ? s.vpv(0, j) : s.iout[j];
  }
  x[L.varr()] = s.varr;
  return x;
}

SolverState unpack(const ArrayModel& model, const Eigen::VectorXd& x, const std::vector<bool>& blocked) {
  const Layout L = layout_of(model);
  if (static_cast<std::size_t>(x.size()) != L.size() || blocked.size() != L.n)
    throw std::invalid_argument("unknown vector does not match the array model");
  SolverState s = SolverState::zeros(L.m, L.n);
  s.blocked = blocked;
  s.varr = x[L.varr()];
  for (std::size_t j = 0; j < L.n; ++j) {
    for (std::size_t i = 0; i < L.m; ++i) {
      s.vd(i, j) = x[L.vd(i, j)];
      if (i > 0) s.vpv(i, j) = x[L.interior(i, j)];
    }
    s.vpv(0, j) = blocked[j] ? x[L.slot(j)] : s.varr;
    s.vpv(L.m, j) = 0.0;
    s.iout[j] = blocked[j] ? 0.0 : x[L.slot(j)];
  }
  return s;
}

Eigen::VectorXd assemble_residual(const ArrayModel& model, const SolverState& state) {
  Eigen::VectorXd r;
  evaluate(model, pack(model, state), state.blocked, &r, nullptr, nullptr);
  return r;
}

Eigen::SparseMatrix<double> assemble_jacobian(const ArrayModel& model, const SolverState& state) {
  Eigen::VectorXd r;
  std::vector<Eigen::Triplet<double>> t;
  evaluate(model, pack(model, state), state.blocked, &r, &t, nullptr);
  return to_sparse(unknown_count(model), t);
}

SolverState initial_guess(const ArrayModel& model) {
  const std::size_t m = model.m_p, n = model.n_p;
  SolverState s = SolverState::zeros(m, n);

  Grid<double> voc(m, n);
  std::vector<double> string_voc(n, 0.0), string_iph(n, std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      voc(i, j) = open_circuit_voltage(model.panels(i, j));
      string_voc[j] += voc(i, j);
      string_iph[j] = std::min(string_iph[j], model.panels(i, j).iph);
    }
  }

  double v0 = 0.0;
  if (const auto* z = std::get_if<ImpedanceDrive>(&model.drive)) {
    const double vmax = *std::max_element(string_voc.begin(), string_voc.end());
    double isum = 0.0;
    for (double i : string_iph) isum += 0.9 * i;
    v0 = std::min(0.85 * vmax, z->z_load * isum);
  } else {
    v0 = std::get<VoltageDrive>(model.drive).v_set;
  }

  s.varr = v0;
  for (std::size_t j = 0; j < n; ++j) {
    const double iout = 0.9 * string_iph[j];
    s.iout[j] = iout;
    double below = string_voc[j];
    for (std::size_t i = 0; i < m; ++i) {
      const double frac = string_voc[j] > 0.0 ? below / string_voc[j] : static_cast<double>(m - i) / m;
      s.vpv(i, j) = v0 * frac;
      below -= voc(i, j);
    }
    s.vpv(0, j) = v0;
    s.vpv(m, j) = 0.0;
    for (std::size_t i = 0; i < m; ++i) s.vd(i, j) = s.vpv(i, j) + iout * model.panels(i, j).rs;
  }
  return s;
}

OperatingPoint solve_operating_point(const ArrayModel& model, const NewtonOptions& options,
                                     const std::optional<SolverState>& init) {
  model.validate();
  options.validate();
  const std::size_t n = model.n_p;

  SolverState state = init ? *init : initial_guess(model);
  check_dims(model, state);
  if (!model.block_diodes) state.blocked.assign(n, false);
  // A warm start keeps its old terminal voltage: the first Newton step from a
  // converged point is then the tangent predictor along the IV curve.
  const auto* v_set = std::get_if<VoltageDrive>(&model.drive);
  if (!init && v_set) state.varr = v_set->v_set;

  const int rounds = options.max_active_set_rounds > 0 ? options.max_active_set_rounds : static_cast<int>(2 * n + 4);
  OperatingPoint op;
  for (int round = 0;; ++round) {
    Eigen::VectorXd x = pack(model, state);
    const FixedSetResult res = newton(model, options, x, state.blocked);
    op.iterations += res.iterations;
    op.residual_norm = res.norm;
    op.clamped_junctions = res.clamped;
    if (v_set) x[static_cast<Eigen::Index>(2 * model.m_p * model.n_p)] = v_set->v_set;
    state = unpack(model, x, state.blocked);
    if (!model.block_diodes) break;

    bool changed = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (!state.blocked[j] && state.iout[j] < 0.0) {
        state.blocked[j] = true;
        state.iout[j] = 0.0;
        state.vpv(0, j) = state.varr;
        changed = true;
      } else if (state.blocked[j] && state.vpv(0, j) > state.varr + kUnblockMargin) {
        state.blocked[j] = false;
        state.iout[j] = 0.0;
        state.vpv(0, j) = state.varr;
        changed = true;
      }
    }
    if (!changed) break;
    if (round + 1 >= rounds)
      throw SolverError(SolverError::Kind::invalid_state, "block diode active set did not settle", op.residual_norm);
  }
  op.state = std::move(state);
  op.active_blocks = op.state.blocked;
  return op;
}

OperatingPoint solve_sdm_array(const ResolvedPanel& aggregated, const Drive& drive, bool block_diode,
                               const NewtonOptions& options, const std::optional<SolverState>& init) {
  return solve_operating_point(make_lumped(aggregated, block_diode, drive), options, init);
}

}  // namespace pvl
