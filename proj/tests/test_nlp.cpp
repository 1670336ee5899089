#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "switchopt/nlp.hpp"

using namespace switchopt;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

NlpProblem bounded_quadratic() {
  // min (z-3)^2, z in [0,2]; optimum pressed against the upper bound.
  NlpProblem p;
  p.num_vars = 1;
  p.num_eq = 0;
  p.objective = [](const Vec& z, Vec* g) {
    if (g) *g = Vec::Constant(1, 2.0 * (z[0] - 3.0));
    return (z[0] - 3.0) * (z[0] - 3.0);
  };
  p.lower = Vec::Zero(1);
  p.upper = Vec::Constant(1, 2.0);
  p.initial_guess = Vec::Constant(1, 0.5);
  return p;
}

NlpProblem equality_qp() {
  // min z1^2 + z2^2 s.t. z1 + z2 = 1.
  NlpProblem p;
  p.num_vars = 2;
  p.num_eq = 1;
  p.objective = [](const Vec& z, Vec* g) {
    if (g) *g = 2.0 * z;
    return z.squaredNorm();
  };
  p.equality = [](const Vec& z, Vec& r, std::vector<Triplet>* jac) {
    r[0] = z[0] + z[1] - 1.0;
    if (jac) {
      jac->emplace_back(0, 0, 1.0);
      jac->emplace_back(0, 1, 1.0);
    }
  };
  p.lower = Vec::Constant(2, -kInf);
  p.upper = Vec::Constant(2, kInf);
  p.initial_guess = Vec::Zero(2);
  return p;
}

NlpProblem rosenbrock() {
  NlpProblem p;
  p.num_vars = 2;
  p.num_eq = 0;
  p.objective = [](const Vec& z, Vec* g) {
    const double a = 1.0 - z[0];
    const double b = z[1] - z[0] * z[0];
    if (g) {
      g->resize(2);
      (*g)[0] = -2.0 * a - 400.0 * z[0] * b;
      (*g)[1] = 200.0 * b;
    }
    return a * a + 100.0 * b * b;
  };
  p.lower = Vec::Constant(2, -kInf);
  p.upper = Vec::Constant(2, kInf);
  p.initial_guess = Vec::Constant(2, -1.2);
  p.initial_guess[1] = 1.0;
  return p;
}

}  // namespace

TEST_CASE("active upper bound with positive multiplier") {
  const NlpSolution sol = solve(bounded_quadratic());
  CHECK(sol.status == SolveStatus::converged);
  CHECK(sol.z[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(sol.bound_multipliers[0] > 0.0);
}

TEST_CASE("symmetric equality-constrained QP") {
  const NlpSolution sol = solve(equality_qp());
  CHECK(sol.status == SolveStatus::converged);
  CHECK(sol.z[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.z[1] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.eq_residual_norm <= 1e-7);
  CHECK(sol.kkt_residual <= 1e-6);
}

TEST_CASE("Rosenbrock reaches the analytic optimum") {
  const NlpSolution sol = solve(rosenbrock());
  CHECK(sol.status == SolveStatus::converged);
  CHECK((sol.z - Vec::Ones(2)).norm() < 1e-5);
}

TEST_CASE("converged solutions respect bounds to tolerance") {
  for (const NlpProblem& p : {bounded_quadratic(), equality_qp(), rosenbrock()}) {
    const NlpSolution sol = solve(p);
    for (int i = 0; i < p.num_vars; ++i) {
      CHECK(sol.z[i] >= p.lower[i] - 1e-9);
      CHECK(sol.z[i] <= p.upper[i] + 1e-9);
    }
  }
}

TEST_CASE("warm start from the solution is a fixed point") {
  NlpProblem p = equality_qp();
  const NlpSolution first = solve(p);
  p.initial_guess = first.z;
  SolveOptions opts;
  opts.lambda0 = first.eq_multipliers;
  const NlpSolution again = solve(p, opts);
  CHECK(again.status == SolveStatus::converged);
  CHECK(again.iterations <= 3);
  CHECK((again.z - first.z).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("iteration log shows descent on accepted steps") {
  // Bound-only problem: the merit function equals the logged objective.
  NlpProblem p = rosenbrock();
  SolveOptions opts;
  opts.iteration_log_csv = "test_nlp_log.csv";
  const NlpSolution sol = solve(p, opts);
  CHECK(sol.status == SolveStatus::converged);

  std::ifstream in(opts.iteration_log_csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "iter,objective,eq_residual,kkt_residual,step_norm");
  double prev = kInf;
  int rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');  // iter
    std::getline(ss, field, ',');  // objective
    const double f = std::stod(field);
    CHECK(f <= prev + 1e-10 * (1.0 + std::abs(prev)));
    prev = f;
    ++rows;
  }
  CHECK(rows > 0);
  std::remove(opts.iteration_log_csv.c_str());
}

TEST_CASE("derivative checker flags a corrupted gradient entry") {
  NlpProblem p;
  p.num_vars = 3;
  p.num_eq = 0;
  p.objective = [](const Vec& z, Vec* g) {
    if (g) {
      *g = 2.0 * z;
      (*g)[1] *= 2.0;  // deliberately wrong
    }
    return z.squaredNorm();
  };
  p.lower = Vec::Constant(3, -kInf);
  p.upper = Vec::Constant(3, kInf);
  p.initial_guess = Vec::Ones(3);
  const DerivativeReport rep = check_derivatives(p, p.initial_guess);
  CHECK(!rep.clean());
  REQUIRE(rep.flagged_grad.size() == 1);
  CHECK(rep.flagged_grad[0] == 1);
}

TEST_CASE("derivative checker is quiet on an exact quadratic") {
  const NlpProblem p = equality_qp();
  const DerivativeReport rep = check_derivatives(p, Vec::Constant(2, 0.3));
  CHECK(rep.clean());
  CHECK(rep.max_rel_err_grad < 1e-8);
  CHECK(rep.max_rel_err_jac < 1e-8);
}

TEST_CASE("non-finite objective raises an evaluation error with a snapshot") {
  NlpProblem p;
  p.num_vars = 1;
  p.num_eq = 0;
  p.objective = [](const Vec& z, Vec* g) {
    if (g) *g = Vec::Ones(1);
    return z[0] > 0.5 ? std::numeric_limits<double>::quiet_NaN() : z[0];
  };
  p.lower = Vec::Constant(1, -kInf);
  p.upper = Vec::Constant(1, kInf);
  p.initial_guess = Vec::Ones(1);
  CHECK_THROWS_AS(solve(p), EvaluationError);
}

TEST_CASE("repeated solves are bit-identical") {
  const NlpSolution a = solve(equality_qp());
  const NlpSolution b = solve(equality_qp());
  REQUIRE(a.z.size() == b.z.size());
  CHECK(std::memcmp(a.z.data(), b.z.data(), sizeof(double) * a.z.size()) == 0);
  CHECK(a.objective_value == b.objective_value);
  CHECK(a.iterations == b.iterations);
}
