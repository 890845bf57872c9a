#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pv_lattice/model.hpp"
#include "pv_lattice/solver.hpp"

namespace pvl {

enum class ModelTag { sdm_a, ppdm_a };

std::string to_string(ModelTag tag);

struct IVSample {
  double v = 0.0;
  double i = 0.0;
  double p = 0.0;
};

struct SweepStats {
  int total_iterations = 0;
  int max_iterations = 0;
  double max_residual = 0.0;
};

struct IVCurve {
  std::vector<IVSample> samples;
  ModelTag model_tag = ModelTag::ppdm_a;
  std::string scenario_id;
  SweepStats stats;
};

struct Peak {
  std::size_t index = 0;
  double v = 0.0;
  double p = 0.0;
};
using PeakSet = std::vector<Peak>;

struct TraceOptions {
  std::optional<double> v_max;  // default: estimate_v_max(model)
  std::size_t n_points = 500;
  bool warm_start = true;
  unsigned threads = 0;  // cold-start only; 0 = hardware concurrency
  NewtonOptions newton;
};

class SweepError : public std::runtime_error {
 public:
  SweepError(const std::string& what, double voltage) : std::runtime_error(what), voltage_(voltage) {}
  double voltage() const { return voltage_; }

 private:
  double voltage_;
};

/// 1.05 x (m_p x the largest panel open-circuit voltage).
double estimate_v_max(const ArrayModel& model);

/// Copy of `model` driven at a fixed terminal voltage.
ArrayModel with_voltage(const ArrayModel& model, double v);

IVCurve trace_iv(const ArrayModel& model, const TraceOptions& options = {}, ModelTag tag = ModelTag::ppdm_a);

/// Impedance sweep: log-spaced Z, each mapped to its operating point;
/// samples are returned ordered by voltage.
IVCurve trace_impedance(const ArrayModel& model, double z_min, double z_max, std::size_t n_points,
                        const NewtonOptions& newton = {}, ModelTag tag = ModelTag::ppdm_a);

PeakSet find_peaks(const IVCurve& curve);

}  // namespace pvl
