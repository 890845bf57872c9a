#include "pv_lattice/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace pvl {

std::string to_string(ModelTag tag) { return tag == ModelTag::sdm_a ? "SDM_A" : "PPDM_A"; }

double estimate_v_max(const ArrayModel& model) {
  double voc = 0.0;
  for (const auto& p : model.panels.values()) voc = std::max(voc, open_circuit_voltage(p));
  return 1.05 * static_cast<double>(model.m_p) * voc;
}

ArrayModel with_voltage(const ArrayModel& model, double v) {
  ArrayModel out = model;
  out.drive = VoltageDrive{v};
  return out;
}

namespace {

IVSample sample_of(const OperatingPoint& op) {
  IVSample s;
  s.v = op.voltage();
  s.i = op.current();
  s.p = s.v * s.i;
  return s;
}

void record(SweepStats& st, const OperatingPoint& op) {
  st.total_iterations += op.iterations;
  st.max_iterations = std::max(st.max_iterations, op.iterations);
  st.max_residual = std::max(st.max_residual, op.residual_norm);
}

OperatingPoint solve_at(const ArrayModel& model, double v, const NewtonOptions& newton,
                        const std::optional<SolverState>& init) {
  try {
    return solve_operating_point(with_voltage(model, v), newton, init);
  } catch (const SolverError& e) {
    throw SweepError(std::string(e.what()) + " at V = " + std::to_string(v) + " V", v);
  }
}

}  // namespace

IVCurve trace_iv(const ArrayModel& model, const TraceOptions& options, ModelTag tag) {
  if (options.n_points < 2) throw std::invalid_argument("trace_iv needs at least 2 points");
  const double v_max = options.v_max ? *options.v_max : estimate_v_max(model);
  if (!(v_max > 0.0)) throw std::invalid_argument("trace_iv needs v_max > 0");

  const std::size_t n = options.n_points;
  auto voltage = [&](std::size_t k) { return v_max * static_cast<double>(k) / static_cast<double>(n - 1); };

  IVCurve curve;
  curve.model_tag = tag;
  curve.samples.resize(n);

  if (options.warm_start) {
    std::optional<SolverState> prev;
    for (std::size_t k = 0; k < n; ++k) {
      const auto op = solve_at(model, voltage(k), options.newton, prev);
      curve.samples[k] = sample_of(op);
      record(curve.stats, op);
      prev = op.state;
    }
    return curve;
  }

  std::vector<OperatingPoint> ops(n);
  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < n;) {
      try {
        ops[k] = solve_at(model, voltage(k), options.newton, std::nullopt);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
  for (std::size_t k = 0; k < n; ++k) {
    curve.samples[k] = sample_of(ops[k]);
    record(curve.stats, ops[k]);
  }
  return curve;
}

IVCurve trace_impedance(const ArrayModel& model, double z_min, double z_max, std::size_t n_points,
                        const NewtonOptions& newton, ModelTag tag) {
  if (n_points < 2) throw std::invalid_argument("impedance sweep needs at least 2 points");
  if (!(z_min > 0.0 && z_max > z_min)) throw std::invalid_argument("impedance sweep needs 0 < z_min < z_max");
  IVCurve curve;
  curve.model_tag = tag;
  std::optional<SolverState> prev;
  const double ratio = std::log(z_max / z_min);
  for (std::size_t k = 0; k < n_points; ++k) {
    ArrayModel driven = model;
    const double z = z_min * std::exp(ratio * static_cast<double>(k) / static_cast<double>(n_points - 1));
    driven.drive = ImpedanceDrive{z};
    OperatingPoint op;
    try {
      op = solve_operating_point(driven, newton, prev);
    } catch (const SolverError& e) {
      throw SweepError(std::string(e.what()) + " at Z = " + std::to_string(z) + " Ohm", prev ? prev->varr : 0.0);
    }
    curve.samples.push_back(sample_of(op));
    record(curve.stats, op);
    prev = op.state;
  }
  std::stable_sort(curve.samples.begin(), curve.samples.end(),
                   [](const IVSample& a, const IVSample& b) { return a.v < b.v; });
  return curve;
}

PeakSet find_peaks(const IVCurve& curve) {
  const auto& s = curve.samples;
  if (s.size() < 3) throw std::invalid_argument("find_peaks needs at least 3 samples");
  PeakSet peaks;
  for (std::size_t k = 1; k + 1 < s.size(); ++k) {
    if (!(s[k].p > s[k - 1].p)) continue;
    // A plateau counts once, at its lowest-voltage sample, if it descends.
    std::size_t end = k;
    while (end + 1 < s.size() && s[end + 1].p == s[k].p) ++end;
    if (end + 1 < s.size() && s[end + 1].p < s[k].p) peaks.push_back({k, s[k].v, s[k].p});
    k = end;
  }
  return peaks;
}

}  // namespace pvl
