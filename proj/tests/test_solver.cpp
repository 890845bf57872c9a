#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <stdexcept>

#include "oracles.hpp"
#include "pv_lattice/cli/scenario.hpp"
#include "pv_lattice/kernels.hpp"
#include "pv_lattice/solver.hpp"

using namespace pvl;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ResolvedPanel stc_panel() { return resolve_panel(et_m672395(), {1000.0, 298.15}); }

ArrayModel uniform_array(std::size_t m, std::size_t n, Drive drive, bool bypass = true, bool block = true) {
  return make_array(et_m672395(), EnvMap(m, n), bypass ? std::optional(bypass_diode()) : std::nullopt, block, drive);
}

ArrayModel scenario(const char* name, Drive drive) {
  cli::ScenarioConfig cfg = cli::load_scenario(std::string(PVL_SCENARIO_DIR) + "/" + name + ".toml");
  cfg.drive = drive;
  return cfg.ppdm_model();
}

double residual_norm(const ArrayModel& model, const OperatingPoint& op) {
  return assemble_residual(model, op.state).lpNorm<Eigen::Infinity>();
}

}  // namespace

TEST_CASE("unknown layout") {
  const ArrayModel a = uniform_array(10, 3, VoltageDrive{100.0});
  CHECK(unknown_count(a) == 61);
  const SolverState s = initial_guess(a);
  CHECK(assemble_residual(a, s).size() == 61);
  const SolverState back = unpack(a, pack(a, s), s.blocked);
  CHECK(back.vd == s.vd);
  CHECK(back.vpv == s.vpv);
  CHECK(back.iout == s.iout);
  CHECK(back.varr == s.varr);
}

TEST_CASE("dimension mismatches are rejected") {
  const ArrayModel a = uniform_array(3, 2, VoltageDrive{10.0});
  const SolverState wrong = SolverState::zeros(2, 2);
  CHECK_THROWS_AS(assemble_residual(a, wrong), std::invalid_argument);
  CHECK_THROWS_AS(assemble_jacobian(a, wrong), std::invalid_argument);
  CHECK_THROWS_AS(solve_operating_point(a, {}, wrong), std::invalid_argument);
}

TEST_CASE("Jacobian matches finite differences") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> g(200.0, 1000.0), t(280.0, 350.0);
  auto isas = {kernels::Isa::scalar, kernels::Isa::avx2};
  for (kernels::Isa isa : isas) {
    if (!kernels::available(isa)) continue;
    kernels::ScopedIsa scope(isa);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      EnvMap env(3, 2);
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) env(i, j) = {g(rng), t(rng)};
      const bool bypass = k % 4 != 3;
      const Drive drive = k % 2 ? Drive{ImpedanceDrive{5.0 + k}} : Drive{VoltageDrive{50.0}};
      const ArrayModel a = make_array(et_m672395(), env, bypass ? std::optional(bypass_diode()) : std::nullopt,
                                      true, drive);
      const SolverState s = oracle::random_state(a, rng, k % 3 == 0);
      worst = std::max(worst, oracle::jacobian_error(a, s, 1e-3));
    }
    INFO("isa " << kernels::to_string(isa));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("Jacobian in the clamped region") {
  const ArrayModel a = uniform_array(2, 1, VoltageDrive{0.0}, false, false);
  SolverState s = SolverState::zeros(2, 1);
  s.vd(0, 0) = 400.0;
  s.vd(1, 0) = 200.0;
  s.vpv(1, 0) = 80.0;
  s.iout[0] = 3.0;
  CHECK(oracle::jacobian_error(a, s, 1e-3) < 1e-6);
}

TEST_CASE("uniform Jacobian blocks are identical across strings") {
  const ArrayModel a = uniform_array(4, 3, VoltageDrive{120.0});
  const SolverState s = initial_guess(a);
  const Eigen::MatrixXd J = Eigen::MatrixXd(assemble_jacobian(a, s));
  const auto m = 4, mn = 12;
  for (int j = 1; j < 3; ++j) {
    for (int i = 0; i < m; ++i) {
      CHECK(J(i, i) == J(j * m + i, j * m + i));
      CHECK(J(mn + i, i) == J(mn + j * m + i, j * m + i));
    }
  }
}

TEST_CASE("dark array at zero volts") {
  EnvMap env(4, 2, EnvCondition{0.0, 298.15});
  const ArrayModel a = make_array(et_m672395(), env, bypass_diode(), true, VoltageDrive{0.0});
  CHECK(assemble_residual(a, SolverState::zeros(4, 2)).lpNorm<Eigen::Infinity>() == 0.0);
  const OperatingPoint op = solve_operating_point(a);
  CHECK_THAT(op.current(), WithinAbs(0.0, 1e-12));
}

TEST_CASE("single panel against bisection") {
  const ResolvedPanel p = stc_panel();
  const double voc = open_circuit_voltage(p);
  for (int k = 0; k < 50; ++k) {
    const double v = -2.0 + (1.05 * voc + 2.0) * k / 49.0;
    const ArrayModel a = make_lumped(p, false, VoltageDrive{v});
    const OperatingPoint op = solve_operating_point(a);
    REQUIRE_THAT(op.current(), WithinAbs(oracle::panel_current(p, v), 1e-9));
    REQUIRE(residual_norm(a, op) <= 1e-9);

    if (v < 0.0) continue;  // a forward-biased bypass diode leaves the unclamped range quickly
    ArrayModel by = a;
    by.bypass = bypass_diode();
    const OperatingPoint ob = solve_operating_point(by);
    REQUIRE_THAT(ob.current(), WithinAbs(oracle::panel_current(p, *by.bypass, v), 1e-9));
  }
}

TEST_CASE("short circuit and open circuit of a uniform array") {
  const ResolvedPanel p = stc_panel();
  const double isc = oracle::panel_current(p, 0.0);
  const OperatingPoint sc = solve_operating_point(uniform_array(10, 3, VoltageDrive{0.0}));
  CHECK_THAT(sc.current(), WithinRel(3.0 * isc, 1e-10));
  CHECK_THAT(sc.current(), WithinAbs(3.0 * p.iph * p.rsh / (p.rsh + p.rs), 1e-6));

  const double voc = open_circuit_voltage(p);
  const OperatingPoint oc = solve_operating_point(uniform_array(10, 3, VoltageDrive{10.0 * voc}));
  CHECK_THAT(oc.current(), WithinAbs(0.0, 1e-9));
}

TEST_CASE("lumped array matches the per-panel model on a uniform array") {
  const PanelParams agg = aggregate_panels_to_array(et_m672395(), 10, 3);
  const ResolvedPanel lumped = resolve_panel(agg, {1000.0, 298.15});
  for (double v : {0.0, 120.0, 300.0, 410.0, 460.0}) {
    const OperatingPoint ppdm = solve_operating_point(uniform_array(10, 3, VoltageDrive{v}));
    const OperatingPoint sdm = solve_sdm_array(lumped, VoltageDrive{v}, true);
    CHECK_THAT(sdm.current(), WithinRel(ppdm.current(), 1e-8) || WithinAbs(ppdm.current(), 1e-12));
  }
  const OperatingPoint zl = solve_operating_point(uniform_array(10, 3, ImpedanceDrive{14.0}));
  const OperatingPoint zs = solve_sdm_array(lumped, ImpedanceDrive{14.0}, true);
  CHECK_THAT(zs.voltage(), WithinRel(zl.voltage(), 1e-8));
  CHECK_THAT(zs.current(), WithinRel(zl.current(), 1e-8));
  CHECK_THAT(zl.current(), WithinRel(zl.voltage() / 14.0, 1e-10));
}

TEST_CASE("warm starts converge quickly") {
  for (const char* name : {"uniform", "psc", "hotspot"}) {
    const ArrayModel base = scenario(name, VoltageDrive{0.0});
    std::optional<SolverState> prev;
    int worst = 0, over = 0, count = 0;
    // Default sweep spacing: 500 points up to about 450 V.
    for (int k = 0; k < 500; ++k) {
      ArrayModel a = base;
      a.drive = VoltageDrive{0.9 * k};
      const OperatingPoint op = solve_operating_point(a, {}, prev);
      if (prev) {
        worst = std::max(worst, op.iterations);
        over += op.iterations > 5;
        ++count;
      }
      prev = op.state;
    }
    INFO(name << ": worst " << worst << ", above five " << over);
    CHECK(over <= count / 100);
    CHECK(worst <= 8);
  }
}

TEST_CASE("partial shading against the nested-bisection string oracle") {
  const ArrayModel base = scenario("psc", VoltageDrive{0.0});
  for (double v : {20.0, 150.0, 300.0, 334.0, 380.0, 420.0, 440.0}) {
    ArrayModel a = base;
    a.drive = VoltageDrive{v};
    const OperatingPoint op = solve_operating_point(a);
    REQUIRE(residual_norm(a, op) <= 1e-9);
    for (std::size_t j = 0; j < a.n_p; ++j) {
      std::vector<ResolvedPanel> string;
      for (std::size_t i = 0; i < a.m_p; ++i) string.push_back(a.panels(i, j));
      const double expected = oracle::string_current(string, *a.bypass, v);
      INFO("v = " << v << ", string " << j);
      CHECK_THAT(op.state.iout[j], WithinAbs(expected, 1e-8));
    }
  }
}

TEST_CASE("block and bypass diode invariants on a shaded array") {
  const ArrayModel base = scenario("psc", VoltageDrive{0.0});
  const double isc = 3.0 * oracle::panel_current(stc_panel(), 0.0);
  std::optional<SolverState> prev;
  for (int k = 0; k <= 120; ++k) {
    ArrayModel a = base;
    a.drive = VoltageDrive{4.0 * k};
    const OperatingPoint op = solve_operating_point(a, {}, prev);
    prev = op.state;
    REQUIRE(op.residual_norm <= 1e-9);
    REQUIRE(residual_norm(a, op) <= 1e-9);
    for (std::size_t j = 0; j < a.n_p; ++j) {
      REQUIRE(op.state.iout[j] >= 0.0);
      if (op.current() > 1.2 * isc) continue;
      for (std::size_t i = 0; i < a.m_p; ++i) REQUIRE(op.state.vpv(i + 1, j) - op.state.vpv(i, j) <= 0.8);
    }
  }
}

TEST_CASE("an open-circuited string is blocked") {
  EnvMap env(3, 2);
  for (std::size_t i = 0; i < 3; ++i) env(i, 1).g = 150.0;
  const ArrayModel a = make_array(et_m672395(), env, bypass_diode(), true, VoltageDrive{140.0});
  const OperatingPoint op = solve_operating_point(a);
  CHECK(op.active_blocks == std::vector<bool>{false, true});
  CHECK(op.state.iout[1] == 0.0);
  CHECK(op.state.vpv(0, 1) <= op.state.varr);
  CHECK(residual_norm(a, op) <= 1e-9);

  ArrayModel open = a;
  open.block_diodes = false;
  CHECK(solve_operating_point(open).state.iout[1] < 0.0);
}

TEST_CASE("solver errors") {
  const ArrayModel a = uniform_array(10, 3, ImpedanceDrive{14.0});
  NewtonOptions o;
  o.max_iters = 1;
  o.tol = 1e-14;
  try {
    solve_operating_point(a, o);
    FAIL("expected SolverError");
  } catch (const SolverError& e) {
    CHECK(e.kind() == SolverError::Kind::max_iterations);
    CHECK(e.last_norm() > 0.0);
    CHECK(e.worst_equation() >= 0);
  }

  NewtonOptions bad;
  bad.tol = 0.0;
  CHECK_THROWS_AS(solve_operating_point(a, bad), std::invalid_argument);
  bad = {};
  bad.max_iters = 0;
  CHECK_THROWS_AS(solve_operating_point(a, bad), std::invalid_argument);
}
