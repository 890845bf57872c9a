#pragma once

#include "pv_lattice/model.hpp"
#include "pv_lattice/solver.hpp"
#include "pv_lattice/sweep.hpp"

namespace pvl {

struct MppResult {
  double p_mpp = 0.0;
  double v_mpp = 0.0;
  double i_mpp = 0.0;
  ModelTag model_tag = ModelTag::ppdm_a;
  int refinement_iters = 0;
};

/// Percentage errors with the PPDM result as the baseline.
struct ModelComparison {
  double p_err = 0.0;
  double v_err = 0.0;
  double i_err = 0.0;
};

/// Aggregated single-diode array MPP from the stationarity condition
/// dP/dV = 0 written in the diode voltage, solved by safeguarded Newton.
MppResult sdm_mpp(const ResolvedPanel& aggregated);

struct PpdmMppOptions {
  std::size_t coarse_points = 200;
  double v_tol = 1e-4;  // V
  NewtonOptions newton;
};

/// Global MPP of the per-panel array: coarse sweep, best sample, then
/// golden-section refinement inside the bracketing interval.
MppResult ppdm_mpp(const ArrayModel& model, const PpdmMppOptions& options = {});

ModelComparison compare_models(const MppResult& sdm, const MppResult& ppdm);

}  // namespace pvl
