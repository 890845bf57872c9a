#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pv_lattice/equivalence.hpp"
#include "pv_lattice/model.hpp"
#include "pv_lattice/solver.hpp"

namespace pvl::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-panel environment override; row/col are 1-based as written in files.
struct PanelOverride {
  std::size_t row = 1;
  std::size_t col = 1;
  std::optional<double> g;
  std::optional<double> t;
};

enum class SweepMode { voltage, impedance };

struct SweepConfig {
  SweepMode mode = SweepMode::voltage;
  std::optional<double> v_max;
  std::size_t n_points = 500;
  double z_min = 0.1;
  double z_max = 1000.0;
};

struct OutputConfig {
  std::string stem;  // file prefix, defaults to the scenario id
  bool csv = true;
  bool json = true;
};

struct ScenarioConfig {
  std::string id;
  PanelParams panel;
  std::size_t m_p = 1;
  std::size_t n_p = 1;
  EnvCondition env;
  std::vector<PanelOverride> overrides;
  bool bypass = false;
  double bypass_threshold = 0.7;
  bool block_diodes = false;
  Drive drive = VoltageDrive{};
  SweepConfig sweep;
  OutputConfig output;
  NewtonOptions solver;
  std::uint64_t hash = 0;  // FNV-1a of the source text

  EnvMap env_map() const;
  ArrayModel ppdm_model() const;
  AggregateInput sdm_input() const;
  ArrayModel sdm_model() const;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::uint64_t h);

/// Throws ConfigError with the source name and location on any problem.
ScenarioConfig parse_scenario(std::string_view text, std::string_view source = "<config>");
ScenarioConfig load_scenario(const std::filesystem::path& path);

}  // namespace pvl::cli
