#pragma once

// Nonlinear DC operating point of the per-panel array circuit.
//
// Unknown vector layout (length 2*m*n + 1, string-major within each block):
//   [0, mn)              vd(i,j)            diode node of panel (i,j)
//   [mn, mn + (m-1)n)    vpv(i,j), i >= 1    node between panel (i-1,j) and (i,j)
//   [.., + n)            string slot j       iout_j, or the floating top node
//                                            vpv(0,j) while the block diode blocks
//   [2mn]                varr
// Residual rows: node N_D of every panel, node N_P of every panel, then the
// array equation. vpv(0,j) = varr (conducting) and vpv(m,j) = 0 are
// substituted at assembly time.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pv_lattice/model.hpp"

namespace pvl {

struct SolverState {
  Grid<double> vd;            // m x n
  Grid<double> vpv;           // (m+1) x n; row 0 array side, row m ground
  std::vector<double> iout;   // n
  double varr = 0.0;
  std::vector<bool> blocked;  // n; block diode reverse-biased

  static SolverState zeros(std::size_t m, std::size_t n);
};

struct NewtonOptions {
  int max_iters = 100;
  double tol = 1e-9;     // A, infinity norm of the residual
  int damping = 12;      // step halvings per iteration
  double vd_limit = 0.0; // V per iteration on any junction; <= 0 means 2 * min alpha
  int max_active_set_rounds = 0;  // <= 0 means 2 * n + 4

  void validate() const;
};

struct OperatingPoint {
  SolverState state;
  double residual_norm = 0.0;
  int iterations = 0;
  std::vector<bool> active_blocks;  // true where the string's block diode blocks
  std::size_t clamped_junctions = 0;

  /// Array terminal current: sum of string currents.
  double current() const;
  double voltage() const { return state.varr; }
};

class SolverError : public std::runtime_error {
 public:
  enum class Kind { max_iterations, singular_jacobian, invalid_state };

  SolverError(Kind kind, const std::string& what, double last_norm = 0.0, std::ptrdiff_t worst_equation = -1)
      : std::runtime_error(what), kind_(kind), last_norm_(last_norm), worst_equation_(worst_equation) {}

  Kind kind() const { return kind_; }
  double last_norm() const { return last_norm_; }
  std::ptrdiff_t worst_equation() const { return worst_equation_; }

 private:
  Kind kind_;
  double last_norm_;
  std::ptrdiff_t worst_equation_;
};

struct Diode {
  double current = 0.0;
  double conductance = 0.0;
  bool clamped = false;
};

/// Shockley current with the exponent clamp of the junction kernels.
Diode shockley_current(const DiodeParams& d, double v);

std::size_t unknown_count(const ArrayModel& model);

Eigen::VectorXd pack(const ArrayModel& model, const SolverState& state);
/// Inverse of pack; `blocked` selects how each string slot is read.
SolverState unpack(const ArrayModel& model, const Eigen::VectorXd& x, const std::vector<bool>& blocked);

Eigen::VectorXd assemble_residual(const ArrayModel& model, const SolverState& state);
Eigen::SparseMatrix<double> assemble_jacobian(const ArrayModel& model, const SolverState& state);

/// Cold-start guess: per-string voltage ladder proportional to panel Voc.
SolverState initial_guess(const ArrayModel& model);

OperatingPoint solve_operating_point(const ArrayModel& model, const NewtonOptions& options = {},
                                     const std::optional<SolverState>& init = std::nullopt);

/// Aggregated single-diode array: one lumped panel, block diode optional.
OperatingPoint solve_sdm_array(const ResolvedPanel& aggregated, const Drive& drive, bool block_diode = false,
                               const NewtonOptions& options = {},
                               const std::optional<SolverState>& init = std::nullopt);

}  // namespace pvl
