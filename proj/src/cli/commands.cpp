#include "pv_lattice/cli/commands.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "pv_lattice/cli/report.hpp"
#include "pv_lattice/cli/scenario.hpp"
#include "pv_lattice/equivalence.hpp"
#include "pv_lattice/kernels.hpp"
#include "pv_lattice/mppt.hpp"
#include "pv_lattice/sweep.hpp"

namespace pvl::cli {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kManifestSchema = "pv_lattice.manifest/1";

bool wants_sdm(ModelSelection m) { return m != ModelSelection::ppdm; }
bool wants_ppdm(ModelSelection m) { return m != ModelSelection::sdm; }

json stats_json(const SweepStats& s) {
  return {{"total_iterations", s.total_iterations},
          {"max_iterations", s.max_iterations},
          {"max_residual", s.max_residual}};
}

json mpp_json(const MppResult& r) {
  return {{"model", to_string(r.model_tag)},
          {"p_mpp", r.p_mpp},
          {"v_mpp", r.v_mpp},
          {"i_mpp", r.i_mpp},
          {"refinement_iters", r.refinement_iters}};
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

// Runs `body`, mapping failures to the documented exit codes.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_code::config;
  } catch (const SweepError& e) {
    err << "solver failure: " << e.what() << "\n";
    return exit_code::solver;
  } catch (const SolverError& e) {
    err << "solver failure: " << e.what() << " (last residual " << e.last_norm() << " A, equation "
        << e.worst_equation() << ")\n";
    return exit_code::solver;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::failure;
  }
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
}

IVCurve trace_model(const ScenarioConfig& cfg, const ArrayModel& model, ModelTag tag, const RunOptions& opt,
                    double v_max) {
  const std::size_t points = opt.points.value_or(cfg.sweep.n_points);
  if (points < 2) throw ConfigError("--points must be >= 2");
  IVCurve curve;
  if (cfg.sweep.mode == SweepMode::impedance) {
    curve = trace_impedance(model, cfg.sweep.z_min, cfg.sweep.z_max, points, cfg.solver, tag);
  } else {
    TraceOptions t;
    t.n_points = points;
    t.v_max = v_max;
    t.warm_start = !opt.cold_start;
    t.newton = cfg.solver;
    curve = trace_iv(model, t, tag);
  }
  curve.scenario_id = cfg.id;
  spdlog::info("{}: traced {} points, {} Newton iterations, max residual {:.3g} A", to_string(tag),
               curve.samples.size(), curve.stats.total_iterations, curve.stats.max_residual);
  return curve;
}

}  // namespace

void configure_logging() {
  auto logger = spdlog::get("pv_lattice");
  if (!logger) logger = spdlog::stderr_color_mt("pv_lattice");
  spdlog::set_default_logger(logger);
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("PV_LATTICE_LOG")) level = spdlog::level::from_str(env);
  spdlog::set_level(level);
}

int run_sweep(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ScenarioConfig cfg = load_scenario(opt.config);
    spdlog::info("scenario {} ({} x {}), kernels {}", cfg.id, cfg.m_p, cfg.n_p, kernels::to_string(kernels::active()));

    // Both models share one voltage grid so their curves compare point by point.
    const ArrayModel ppdm = cfg.ppdm_model();
    const double v_max = cfg.sweep.v_max.value_or(estimate_v_max(ppdm));
    std::vector<IVCurve> curves;
    if (wants_sdm(opt.models)) curves.push_back(trace_model(cfg, cfg.sdm_model(), ModelTag::sdm_a, opt, v_max));
    if (wants_ppdm(opt.models)) curves.push_back(trace_model(cfg, ppdm, ModelTag::ppdm_a, opt, v_max));

    ensure_dir(opt.out_dir);
    json manifest = {{"schema", kManifestSchema},
                     {"command", "sweep"},
                     {"scenario_id", cfg.id},
                     {"scenario_hash", "fnv1a64:" + hash_hex(cfg.hash)},
                     {"array", {{"panels_per_string", cfg.m_p}, {"strings", cfg.n_p}}},
                     {"sweep_mode", cfg.sweep.mode == SweepMode::voltage ? "voltage" : "impedance"},
                     {"warm_start", !opt.cold_start},
                     {"kernel_isa", std::string(kernels::to_string(kernels::active()))},
                     {"curves", json::array()}};
    for (const auto& c : curves) {
      const std::string tag = c.model_tag == ModelTag::sdm_a ? "sdm" : "ppdm";
      const std::string file = cfg.output.stem + "_" + tag + ".csv";
      if (cfg.output.csv) write_atomic(opt.out_dir / file, curve_csv(c));
      const auto peaks = c.samples.size() >= 3 ? find_peaks(c) : PeakSet{};
      json jp = json::array();
      for (const auto& p : peaks) jp.push_back({{"v", p.v}, {"p", p.p}});
      manifest["curves"].push_back({{"model", to_string(c.model_tag)},
                                    {"file", cfg.output.csv ? json(file) : json(nullptr)},
                                    {"points", c.samples.size()},
                                    {"v_min", c.samples.front().v},
                                    {"v_max", c.samples.back().v},
                                    {"peaks", jp},
                                    {"solver", stats_json(c.stats)}});
      out << to_string(c.model_tag) << ": " << c.samples.size() << " points, " << peaks.size() << " power peak(s)\n";
    }
    if (cfg.output.json) write_atomic(opt.out_dir / (cfg.output.stem + "_manifest.json"), json_text(manifest));
    return exit_code::ok;
  });
}

int run_mpp(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ScenarioConfig cfg = load_scenario(opt.config);
    std::optional<MppResult> sdm, ppdm;
    if (wants_sdm(opt.models)) sdm = sdm_mpp(cfg.sdm_input().resolved);
    if (wants_ppdm(opt.models)) {
      PpdmMppOptions mo;
      mo.newton = cfg.solver;
      if (opt.points) mo.coarse_points = *opt.points;
      if (mo.coarse_points < 3) throw ConfigError("--points must be >= 3 for the MPP search");
      ppdm = ppdm_mpp(cfg.ppdm_model(), mo);
    }

    json report = {{"command", "mpp"}, {"scenario_id", cfg.id}, {"scenario_hash", "fnv1a64:" + hash_hex(cfg.hash)}};
    const auto agg = cfg.sdm_input();
    report["sdm_input"] = {{"g", agg.mean_env.g}, {"t", agg.mean_env.t}};
    report["results"] = json::array();
    if (sdm) report["results"].push_back(mpp_json(*sdm));
    if (ppdm) report["results"].push_back(mpp_json(*ppdm));

    char line[160];
    out << "scenario " << cfg.id << "  (SDM_A input: G = " << format_number(agg.mean_env.g)
        << " W/m^2, T = " << format_number(agg.mean_env.t) << " K)\n";
    std::snprintf(line, sizeof line, "%-10s %12s %12s %12s\n", "model", "P_mpp (W)", "V_mpp (V)", "I_mpp (A)");
    out << line;
    for (const auto* r : {sdm ? &*sdm : nullptr, ppdm ? &*ppdm : nullptr}) {
      if (!r) continue;
      std::snprintf(line, sizeof line, "%-10s %12.1f %12.1f %12.2f\n", to_string(r->model_tag).c_str(), r->p_mpp,
                    r->v_mpp, r->i_mpp);
      out << line;
    }
    if (sdm && ppdm) {
      const auto cmp = compare_models(*sdm, *ppdm);
      report["errors_percent"] = {{"p_err", cmp.p_err}, {"v_err", cmp.v_err}, {"i_err", cmp.i_err}};
      std::snprintf(line, sizeof line, "%-10s %11.2f%% %11.2f%% %11.2f%%\n", "error", cmp.p_err, cmp.v_err, cmp.i_err);
      out << line;
    }
    ensure_dir(opt.out_dir);
    if (cfg.output.json) write_atomic(opt.out_dir / (cfg.output.stem + "_mpp.json"), json_text(report));
    return exit_code::ok;
  });
}

int run_audit(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ScenarioConfig cfg = load_scenario(opt.config);
    const ArrayModel model = cfg.ppdm_model();
    PpdmMppOptions mo;
    mo.newton = cfg.solver;
    if (opt.points) mo.coarse_points = *opt.points;
    if (mo.coarse_points < 3) throw ConfigError("--points must be >= 3 for the MPP search");
    const MppResult mpp = ppdm_mpp(model, mo);
    const auto point = solve_operating_point(with_voltage(model, mpp.v_mpp), cfg.solver);
    AuditOptions ao;
    ao.newton = cfg.solver;
    const auto rep = audit_subequalities(model, cfg.sdm_input().resolved, point, ao);

    json conds = json::array();
    for (const auto& c : rep.checks)
      conds.push_back({{"name", std::string(to_string(c.condition))},
                       {"pass", c.pass},
                       {"max_abs", c.max_abs},
                       {"max_rel", c.max_rel}});
    const json report = {{"command", "audit"},
                         {"scenario_id", cfg.id},
                         {"scenario_hash", "fnv1a64:" + hash_hex(cfg.hash)},
                         {"uniform", rep.uniform},
                         {"point", {{"v", point.voltage()}, {"i", point.current()}}},
                         {"sdm_diode_voltage", rep.sdm_diode_voltage},
                         {"conditions", conds},
                         {"all_pass", rep.all_pass()}};
    ensure_dir(opt.out_dir);
    if (cfg.output.json) write_atomic(opt.out_dir / (cfg.output.stem + "_audit.json"), json_text(report));
    out << json_text(report);
    return exit_code::ok;
  });
}

}  // namespace pvl::cli
