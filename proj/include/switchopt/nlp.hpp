#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "switchopt/model.hpp"

namespace switchopt {

using Triplet = Eigen::Triplet<double>;

/// Thrown when the objective or constraints return a non-finite value at an
/// iterate. Carries a snapshot of the offending point.
struct EvaluationError : std::runtime_error {
  Vec z;
  EvaluationError(const std::string& msg, Vec z_) : std::runtime_error(msg), z(std::move(z_)) {}
};

/// Smooth program: min f(z) s.t. c(z) = 0, lower <= z <= upper.
struct NlpProblem {
  int num_vars = 0;
  int num_eq = 0;
  // Returns the objective value; fills *grad when non-null.
  std::function<double(const Vec& z, Vec* grad)> objective;
  // Fills the residual; appends Jacobian triplets when jac is non-null.
  std::function<void(const Vec& z, Vec& residual, std::vector<Triplet>* jac)> equality;
  Vec lower, upper;  // +-inf allowed
  Vec initial_guess;
  // Optional structural sparsity of the Hessian of the augmented Lagrangian
  // (upper or lower entries; the solver symmetrizes). When provided, the
  // solver runs a projected Newton inner method with a colored
  // finite-difference Hessian; otherwise it falls back to projected L-BFGS.
  std::vector<std::pair<int, int>> hessian_pattern;
};

enum class SolveStatus { converged, max_iterations, line_search_failure };

const char* to_string(SolveStatus s);

struct NlpSolution {
  Vec z;
  double objective_value = 0.0;
  double eq_residual_norm = 0.0;  // inf-norm of c(z)
  double kkt_residual = 0.0;      // inf-norm of projected Lagrangian gradient
  Vec bound_multipliers;          // >= 0, nonzero only at active bounds
  Vec eq_multipliers;
  SolveStatus status = SolveStatus::max_iterations;
  int iterations = 0;  // accepted inner iterations, total
};

struct SolveOptions {
  double tol_eq = 1e-7;
  double tol_kkt = 1e-6;
  double tol_bound = 1e-9;
  int max_outer = 40;
  int max_inner = 5000;  // per outer iteration
  long max_total_inner = 400000;
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  double penalty_cap = 1e8;
  int lbfgs_memory = 12;
  Vec lambda0;                    // optional equality-multiplier warm start
  std::string iteration_log_csv;  // optional, iter,objective,eq_residual,kkt_residual,step_norm
  bool verbose = false;           // outer-iteration summary on stderr
};

NlpSolution solve(const NlpProblem& p, const SolveOptions& opts = {});

/// Thrown by the transcription drivers when the NLP fails to converge;
/// carries the solve result for diagnosis.
struct SolverFailure : std::runtime_error {
  NlpSolution solution;
  SolverFailure(const std::string& msg, NlpSolution s)
      : std::runtime_error(msg), solution(std::move(s)) {}
};

struct DerivativeReport {
  double max_rel_err_grad = 0.0;
  double max_rel_err_jac = 0.0;
  std::vector<int> flagged_grad;
  std::vector<std::pair<int, int>> flagged_jac;  // (constraint row, variable)
  bool clean() const { return flagged_grad.empty() && flagged_jac.empty(); }
};

/// Central finite differences with step 1e-6*(1+|z_i|); flags relative
/// errors above 1e-4.
DerivativeReport check_derivatives(const NlpProblem& p, const Vec& z);

}  // namespace switchopt
