#pragma once

// Checks of the conditions under which the aggregated single-diode array and
// the per-panel array are the same circuit at the terminals.

#include <array>
#include <string_view>

#include "pv_lattice/model.hpp"
#include "pv_lattice/solver.hpp"

namespace pvl {

/// Row-wise additive identities between the aggregated and per-panel models.
enum class Condition { photocurrent, exponential, saturation, shunt, series };
inline constexpr std::array kConditions = {Condition::photocurrent, Condition::exponential, Condition::saturation,
                                           Condition::shunt, Condition::series};

std::string_view to_string(Condition c);

struct ConditionCheck {
  Condition condition = Condition::photocurrent;
  double max_abs = 0.0;  // A
  double max_rel = 0.0;  // |lhs - rhs| / max(|lhs|, |rhs|), worst row
  bool pass = true;
};

struct EquivalenceReport {
  bool uniform = false;
  double voltage = 0.0;       // terminal voltage of the audited point
  double sdm_diode_voltage = 0.0;
  std::array<ConditionCheck, 5> checks{};

  const ConditionCheck& check(Condition c) const { return checks[static_cast<std::size_t>(c)]; }
  bool all_pass() const;
};

/// True iff every panel's five parameters match panel (0,0) within rel_tol.
bool is_uniform(const ArrayModel& model, double rel_tol = 1e-9);

struct AuditOptions {
  double rel_tol = 1e-8;
  double converged_tol = 1e-8;  // A; larger residuals reject the point
  NewtonOptions newton;
};

/// `aggregated` is the resolved SDM_A panel; `point` a converged PPDM point.
EquivalenceReport audit_subequalities(const ArrayModel& model, const ResolvedPanel& aggregated,
                                      const OperatingPoint& point, const AuditOptions& options = {});

struct AggregateInput {
  PanelParams params;    // panel-to-array aggregated parameters
  EnvCondition mean_env; // arithmetic means of g and t over all panels
  ResolvedPanel resolved;
};

AggregateInput build_aggregate_input(const EnvMap& env, const PanelParams& panel);

}  // namespace pvl
