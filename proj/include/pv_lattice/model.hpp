#pragma once

// Domain types and the parameter laws that turn a panel datasheet fit plus
// an operating environment into the circuit parameters the solver consumes.

#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

namespace pvl {

namespace constants {
inline constexpr double q = 1.602176634e-19;     // C
inline constexpr double k = 1.380649e-23;        // J/K
inline constexpr double k_ev = 8.617333262e-5;   // eV/K
inline constexpr double stc_irradiance = 1000.0; // W/m^2
inline constexpr double stc_temperature = 298.15;
// Shunt resistance is evaluated at no less than this irradiance so that a
// fully shaded panel keeps a finite, positive shunt.
inline constexpr double min_shunt_irradiance = 1.0;
}  // namespace constants

/// Five-parameter single-diode fit at reference conditions plus the cell
/// structure it was fitted for. The same struct carries aggregated panel and
/// array parameters: aggregation multiplies `m_c`/`n_c` by the series/parallel
/// counts so the thermal voltage law stays `ideality * k * T * m_c / q`.
struct PanelParams {
  double iph_ref = 10.4;
  double i0_ref = 2.4416e-11;
  double ideality = 1.02;
  double rs = 0.3719;
  double rsh_ref = 807.2;
  int m_c = 72;
  int n_c = 1;
  double gamma_t = 5e-4;
  double g_ref = constants::stc_irradiance;
  double t_ref = constants::stc_temperature;
  double eg_ref = 0.0;  // eV; use band_gap(t_ref) via with_default_band_gap()

  /// Throws std::invalid_argument naming the first violated field.
  void validate() const;
};

/// Table I panel (Elite ET-M672395), with eg_ref resolved at t_ref.
PanelParams et_m672395();

/// Returns a copy whose eg_ref is band_gap(t_ref).
PanelParams with_default_band_gap(PanelParams p);

struct EnvCondition {
  double g = constants::stc_irradiance;  // W/m^2
  double t = constants::stc_temperature; // K
  void validate() const;
};

/// Circuit parameters of one panel at its operating environment.
struct ResolvedPanel {
  double iph = 0.0;
  double i0 = 0.0;
  double alpha = 0.0;  // V
  double rs = 0.0;
  double rsh = 0.0;

  bool operator==(const ResolvedPanel&) const = default;
};

struct DiodeParams {
  double i0 = 0.0;
  double alpha = 0.0;
};

/// Bypass diode that carries `reference_current` at `threshold` volts with an
/// ideality-1 thermal voltage at `temperature`.
DiodeParams bypass_diode(double threshold = 0.7, double temperature = 300.0,
                         double reference_current = 1.0);

struct ImpedanceDrive {
  double z_load = 0.0;  // Ohm
};
struct VoltageDrive {
  double v_set = 0.0;  // V
};
using Drive = std::variant<ImpedanceDrive, VoltageDrive>;

/// Row-major m_p x n_p grid; row 0 is the top (array terminal side) panel.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, const T& init = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, init) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  const std::vector<T>& values() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using EnvMap = Grid<EnvCondition>;

struct ArrayModel {
  std::size_t m_p = 1;  // panels in series per string
  std::size_t n_p = 1;  // strings in parallel
  Grid<ResolvedPanel> panels;
  std::optional<DiodeParams> bypass;
  bool block_diodes = false;
  Drive drive = VoltageDrive{};

  void validate() const;
};

/// Builds an array of m_p x n_p panels with per-panel environment.
ArrayModel make_array(const PanelParams& panel, const EnvMap& env,
                      std::optional<DiodeParams> bypass, bool block_diodes,
                      Drive drive);

/// Single-"panel" array holding already-aggregated parameters.
ArrayModel make_lumped(const ResolvedPanel& lumped, bool block_diode, Drive drive);

PanelParams aggregate_cells_to_panel(const PanelParams& cell, int m_c, int n_c);
PanelParams aggregate_panels_to_array(const PanelParams& panel, int m_p, int n_p);

double photocurrent(const PanelParams& p, const EnvCondition& env);
double band_gap(double t);
double saturation_current(const PanelParams& p, double t);
double shunt_resistance(const PanelParams& p, double g);
double thermal_voltage(const PanelParams& p, double t);
ResolvedPanel resolve_panel(const PanelParams& p, const EnvCondition& env);

/// Open-circuit voltage of one panel (terminal current zero, no bypass).
double open_circuit_voltage(const ResolvedPanel& p);

}  // namespace pvl
