#include "pv_lattice/cli/scenario.hpp"

#include <toml.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace pvl::cli {

namespace {

[[noreturn]] void fail(std::string_view source, const std::string& msg) {
  throw ConfigError(std::string(source) + ": " + msg);
}

void check_keys(std::string_view source, const toml::table& t, std::string_view where,
                std::initializer_list<std::string_view> allowed) {
  const std::set<std::string_view> ok(allowed);
  for (const auto& [k, v] : t) {
    (void)v;
    if (!ok.count(k.str())) fail(source, "unknown key '" + std::string(k.str()) + "' in [" + std::string(where) + "]");
  }
}

double number(std::string_view source, const toml::node_view<const toml::node>& node, std::string_view key) {
  if (auto v = node.value<double>()) return *v;
  fail(source, "'" + std::string(key) + "' must be a number");
}

std::optional<double> opt_number(std::string_view source, const toml::table& t, std::string_view key) {
  const auto node = toml::node_view<const toml::node>(t.get(key));
  if (!node) return std::nullopt;
  return number(source, node, key);
}

template <class Int>
std::optional<Int> opt_int(std::string_view source, const toml::table& t, std::string_view key) {
  const auto* node = t.get(key);
  if (!node) return std::nullopt;
  const auto v = node->value<std::int64_t>();
  if (!v || !node->is_integer()) fail(source, "'" + std::string(key) + "' must be an integer");
  if (*v < 0) fail(source, "'" + std::string(key) + "' must be non-negative");
  return static_cast<Int>(*v);
}

std::optional<bool> opt_bool(std::string_view source, const toml::table& t, std::string_view key) {
  const auto* node = t.get(key);
  if (!node) return std::nullopt;
  if (!node->is_boolean()) fail(source, "'" + std::string(key) + "' must be true or false");
  return node->value<bool>();
}

const toml::table* subtable(std::string_view source, const toml::table& root, std::string_view key) {
  const auto* node = root.get(key);
  if (!node) return nullptr;
  if (!node->is_table()) fail(source, "'" + std::string(key) + "' must be a table");
  return node->as_table();
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int k = 15; k >= 0; --k, h >>= 4) s[static_cast<std::size_t>(k)] = digits[h & 0xF];
  return s;
}

ScenarioConfig parse_scenario(std::string_view text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " (line " << e.source().begin.line << ", column " << e.source().begin.column << ")";
    fail(source, os.str());
  }

  check_keys(source, root,
             "", {"id", "panel", "array", "env", "bypass", "block_diodes", "drive", "sweep", "output", "solver"});

  ScenarioConfig cfg;
  cfg.hash = fnv1a64(text);
  if (const auto id = root["id"].value<std::string>()) cfg.id = *id;
  else fail(source, "missing string key 'id'");
  if (cfg.id.empty() || cfg.id.find_first_of("/\\") != std::string::npos)
    fail(source, "'id' must be a non-empty name without path separators");

  bool eg_given = false;
  if (const auto* p = subtable(source, root, "panel")) {
    check_keys(source, *p, "panel",
               {"iph_ref", "i0_ref", "ideality", "rs", "rsh_ref", "cells_series", "cells_parallel", "gamma_t",
                "g_ref", "t_ref", "eg_ref"});
    auto& pp = cfg.panel;
    if (auto v = opt_number(source, *p, "iph_ref")) pp.iph_ref = *v;
    if (auto v = opt_number(source, *p, "i0_ref")) pp.i0_ref = *v;
    if (auto v = opt_number(source, *p, "ideality")) pp.ideality = *v;
    if (auto v = opt_number(source, *p, "rs")) pp.rs = *v;
    if (auto v = opt_number(source, *p, "rsh_ref")) pp.rsh_ref = *v;
    if (auto v = opt_int<int>(source, *p, "cells_series")) pp.m_c = *v;
    if (auto v = opt_int<int>(source, *p, "cells_parallel")) pp.n_c = *v;
    if (auto v = opt_number(source, *p, "gamma_t")) pp.gamma_t = *v;
    if (auto v = opt_number(source, *p, "g_ref")) pp.g_ref = *v;
    if (auto v = opt_number(source, *p, "t_ref")) pp.t_ref = *v;
    if (auto v = opt_number(source, *p, "eg_ref")) {
      pp.eg_ref = *v;
      eg_given = true;
    }
  }
  try {
    if (!eg_given) cfg.panel = with_default_band_gap(cfg.panel);
    cfg.panel.validate();
  } catch (const std::exception& e) {
    fail(source, std::string("[panel] ") + e.what());
  }

  const auto* arr = subtable(source, root, "array");
  if (!arr) fail(source, "missing [array] table");
  check_keys(source, *arr, "array", {"panels_per_string", "strings"});
  const auto m = opt_int<std::size_t>(source, *arr, "panels_per_string");
  const auto n = opt_int<std::size_t>(source, *arr, "strings");
  if (!m || !n || *m < 1 || *n < 1) fail(source, "[array] needs panels_per_string >= 1 and strings >= 1");
  cfg.m_p = *m;
  cfg.n_p = *n;

  if (const auto* env = subtable(source, root, "env")) {
    check_keys(source, *env, "env", {"g", "t", "overrides"});
    if (auto v = opt_number(source, *env, "g")) cfg.env.g = *v;
    if (auto v = opt_number(source, *env, "t")) cfg.env.t = *v;
    if (const auto* ov = env->get("overrides")) {
      const auto* list = ov->as_array();
      if (!list) fail(source, "[env] overrides must be an array of tables ([[env.overrides]])");
      std::set<std::pair<std::size_t, std::size_t>> seen;
      for (const auto& item : *list) {
        const auto* t = item.as_table();
        if (!t) fail(source, "each env override must be a table");
        check_keys(source, *t, "env.overrides", {"row", "col", "g", "t"});
        PanelOverride o;
        const auto r = opt_int<std::size_t>(source, *t, "row");
        const auto c = opt_int<std::size_t>(source, *t, "col");
        if (!r || !c) fail(source, "env override needs row and col");
        o.row = *r;
        o.col = *c;
        if (o.row < 1 || o.row > cfg.m_p || o.col < 1 || o.col > cfg.n_p)
          fail(source, "env override (" + std::to_string(o.row) + ", " + std::to_string(o.col) +
                           ") is outside the " + std::to_string(cfg.m_p) + " x " + std::to_string(cfg.n_p) + " array");
        if (!seen.insert({o.row, o.col}).second)
          fail(source, "duplicate env override for (" + std::to_string(o.row) + ", " + std::to_string(o.col) + ")");
        o.g = opt_number(source, *t, "g");
        o.t = opt_number(source, *t, "t");
        if (!o.g && !o.t) fail(source, "env override needs g and/or t");
        cfg.overrides.push_back(o);
      }
    }
  }

  if (const auto* b = subtable(source, root, "bypass")) {
    check_keys(source, *b, "bypass", {"enabled", "threshold"});
    if (auto v = opt_bool(source, *b, "enabled")) cfg.bypass = *v;
    if (auto v = opt_number(source, *b, "threshold")) cfg.bypass_threshold = *v;
    if (!(cfg.bypass_threshold > 0.0)) fail(source, "[bypass] threshold must be > 0");
  }
  if (const auto* b = subtable(source, root, "block_diodes")) {
    check_keys(source, *b, "block_diodes", {"enabled"});
    if (auto v = opt_bool(source, *b, "enabled")) cfg.block_diodes = *v;
  }

  const auto* drive = subtable(source, root, "drive");
  if (!drive) fail(source, "missing [drive] table (z_load or voltage)");
  check_keys(source, *drive, "drive", {"z_load", "voltage"});
  const auto z = opt_number(source, *drive, "z_load");
  const auto v = opt_number(source, *drive, "voltage");
  if (z.has_value() == v.has_value()) fail(source, "[drive] needs exactly one of z_load or voltage");
  if (z) {
    if (!(*z > 0.0)) fail(source, "[drive] z_load must be > 0");
    cfg.drive = ImpedanceDrive{*z};
  } else {
    cfg.drive = VoltageDrive{*v};
  }

  if (const auto* s = subtable(source, root, "sweep")) {
    check_keys(source, *s, "sweep", {"mode", "points", "v_max", "z_min", "z_max"});
    if (const auto* node = s->get("mode")) {
      const auto mode = node->value<std::string>();
      if (mode == "voltage") cfg.sweep.mode = SweepMode::voltage;
      else if (mode == "impedance") cfg.sweep.mode = SweepMode::impedance;
      else fail(source, "[sweep] mode must be \"voltage\" or \"impedance\"");
    }
    if (auto p = opt_int<std::size_t>(source, *s, "points")) cfg.sweep.n_points = *p;
    cfg.sweep.v_max = opt_number(source, *s, "v_max");
    if (auto x = opt_number(source, *s, "z_min")) cfg.sweep.z_min = *x;
    if (auto x = opt_number(source, *s, "z_max")) cfg.sweep.z_max = *x;
    if (cfg.sweep.n_points < 2) fail(source, "[sweep] points must be >= 2");
    if (cfg.sweep.v_max && !(*cfg.sweep.v_max > 0.0)) fail(source, "[sweep] v_max must be > 0");
    if (!(cfg.sweep.z_min > 0.0 && cfg.sweep.z_max > cfg.sweep.z_min))
      fail(source, "[sweep] needs 0 < z_min < z_max");
  }

  cfg.output.stem = cfg.id;
  if (const auto* o = subtable(source, root, "output")) {
    check_keys(source, *o, "output", {"stem", "formats"});
    if (const auto* st = o->get("stem")) {
      const auto s = st->value<std::string>();
      if (!s || s->empty() || s->find_first_of("/\\") != std::string::npos)
        fail(source, "[output] stem must be a file name prefix");
      cfg.output.stem = *s;
    }
    if (const auto* f = o->get("formats")) {
      const auto* list = f->as_array();
      if (!list) fail(source, "[output] formats must be an array of strings");
      cfg.output.csv = cfg.output.json = false;
      for (const auto& e : *list) {
        const auto s = e.value<std::string>();
        if (s == "csv") cfg.output.csv = true;
        else if (s == "json") cfg.output.json = true;
        else fail(source, "[output] formats accepts \"csv\" and \"json\"");
      }
    }
  }

  if (const auto* s = subtable(source, root, "solver")) {
    check_keys(source, *s, "solver", {"tol", "max_iters", "damping", "vd_limit"});
    if (auto x = opt_number(source, *s, "tol")) cfg.solver.tol = *x;
    if (auto x = opt_int<int>(source, *s, "max_iters")) cfg.solver.max_iters = *x;
    if (auto x = opt_int<int>(source, *s, "damping")) cfg.solver.damping = *x;
    if (auto x = opt_number(source, *s, "vd_limit")) cfg.solver.vd_limit = *x;
    try {
      cfg.solver.validate();
    } catch (const std::exception& e) {
      fail(source, std::string("[solver] ") + e.what());
    }
  }

  // Resolve once so that bad environments surface as configuration errors.
  try {
    (void)cfg.ppdm_model();
    (void)cfg.sdm_input();
  } catch (const std::exception& e) {
    fail(source, e.what());
  }
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open scenario file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.string());
}

EnvMap ScenarioConfig::env_map() const {
  EnvMap map(m_p, n_p, env);
  for (const auto& o : overrides) {
    auto& e = map(o.row - 1, o.col - 1);
    if (o.g) e.g = *o.g;
    if (o.t) e.t = *o.t;
  }
  return map;
}

ArrayModel ScenarioConfig::ppdm_model() const {
  std::optional<DiodeParams> by;
  if (bypass) by = bypass_diode(bypass_threshold);
  return make_array(panel, env_map(), by, block_diodes, drive);
}

AggregateInput ScenarioConfig::sdm_input() const { return build_aggregate_input(env_map(), panel); }

ArrayModel ScenarioConfig::sdm_model() const { return make_lumped(sdm_input().resolved, block_diodes, drive); }

}  // namespace pvl::cli
