#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "switchopt/model.hpp"
#include "switchopt/sto.hpp"

using namespace switchopt;

namespace {

ProblemSpec scalar_linear(double rate, double tf) {
  // x' = rate * x, no inputs beyond a dummy discrete channel, zero cost.
  ProblemSpec s;
  s.state_dim = 1;
  s.discrete_input_dim = 1;
  s.continuous_input_dim = 0;
  s.dynamics = [rate](const Vec& x, const Vec&, const Vec&, double) { return Vec(rate * x); };
  s.dynamics_jacobians = [rate](const Vec&, const Vec&, const Vec&, double) {
    DynamicsJacobians J;
    J.dfdx = Mat::Constant(1, 1, rate);
    J.dfdu = Mat::Zero(1, 1);
    J.dfdc = Mat::Zero(1, 0);
    return J;
  };
  s.stage_cost = [](const Vec&, const Vec&, const Vec&, double) { return 0.0; };
  s.stage_cost_gradients = [](const Vec&, const Vec&, const Vec&, double) {
    StageCostGradients g;
    g.dldx = Vec::Zero(1);
    g.dldu = Vec::Zero(1);
    g.dldc = Vec::Zero(0);
    return g;
  };
  s.continuous_lower = Vec::Zero(0);
  s.continuous_upper = Vec::Zero(0);
  s.discrete_value_set = {Vec::Zero(1)};
  s.t0 = 0.0;
  s.tf = tf;
  s.x0 = Vec::Ones(1);
  return s;
}

ControlGrid uniform_grid(const ProblemSpec& spec, int nodes, const Vec& u, const Vec& c) {
  ControlGrid g;
  const double h = (spec.tf - spec.t0) / (nodes - 1);
  for (int k = 0; k < nodes; ++k) g.times.push_back(spec.t0 + k * h);
  g.discrete.assign(nodes - 1, u);
  g.continuous.assign(nodes - 1, c);
  return g;
}

double double_tank_sim_cost(int nodes, const Eigen::Vector2d& u, double c2) {
  const ProblemSpec spec = make_double_tank();
  Vec c(2);
  c << 10.0, c2;
  return simulate(spec, uniform_grid(spec, nodes, u, c), spec.x0).total_cost;
}

}  // namespace

TEST_CASE("reference signal") {
  CHECK(reference(0.0) == doctest::Approx(2.0));
  CHECK(reference(M_PI / 2) == doctest::Approx(2.5));
  CHECK(reference(M_PI) == doctest::Approx(2.0));
  CHECK(reference_rate(0.0) == doctest::Approx(0.5));
}

TEST_CASE("double tank rhs and one Euler step") {
  Eigen::Vector2d x(4.0, 1.0), u(0.0, 1.0), c(10.0, 10.0);
  const Eigen::Vector2d f = double_tank_rhs(x, u, c);
  CHECK(f[0] == doctest::Approx(8.0));
  CHECK(f[1] == doctest::Approx(1.0));

  const ProblemSpec spec = make_double_tank();
  const Vec next = euler_step(spec, x, u, c, 0.0, 0.1);
  CHECK(next[0] == doctest::Approx(4.8));
  CHECK(next[1] == doctest::Approx(1.1));
}

TEST_CASE("euler_step rejects non-positive step") {
  const ProblemSpec spec = make_double_tank();
  Eigen::Vector2d x(4.0, 1.0), u(0.0, 1.0), c(10.0, 10.0);
  CHECK_THROWS_AS(euler_step(spec, x, u, c, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(euler_step(spec, x, u, c, 0.0, -0.1), std::invalid_argument);
}

TEST_CASE("euler_step on a linear system") {
  const ProblemSpec s = scalar_linear(1.0, 1.0);
  const Vec next = euler_step(s, Vec::Ones(1), Vec::Zero(1), Vec::Zero(0), 0.0, 0.5);
  CHECK(next[0] == doctest::Approx(1.5));
}

TEST_CASE("simulate on a zero-duration grid") {
  const ProblemSpec spec = make_double_tank();
  ControlGrid g;
  g.times = {spec.t0};
  const Trajectory traj = simulate(spec, g, spec.x0);
  CHECK(traj.num_nodes() == 1);
  CHECK(traj.total_cost == doctest::Approx(0.0));
  CHECK(traj.states[0].isApprox(spec.x0));
}

TEST_CASE("single-stage (0,1) control replayed through simulate hits the known cost") {
  // The optimized single-stage profile (u fixed at (0,1), c2 free) costs
  // 19.406; replaying its piecewise-constant controls through the plain
  // rollout must land on the same number.
  const ProblemSpec spec = make_double_tank();
  Sequence seq;
  seq.stages = {Eigen::Vector2d(0, 1)};
  SlackCosts costs;
  costs.a = {1.0};
  costs.b = {0.0};
  const StoSolution sol = solve_sto(spec, seq, 300, {0.0}, costs);
  REQUIRE(sol.nlp.status == SolveStatus::converged);

  ControlGrid g;
  g.times = sol.trajectory.times;
  g.discrete = sol.trajectory.discrete_inputs;
  g.continuous = sol.trajectory.continuous_inputs;
  const Trajectory traj = simulate(spec, g, spec.x0);
  CHECK(traj.total_cost == doctest::Approx(19.406).epsilon(0.02));
}

TEST_CASE("rollout cost self-convergence is first order") {
  auto cost = [](int nodes) { return double_tank_sim_cost(nodes, Eigen::Vector2d(0, 1), 10.0); };
  const double ref = cost(10000);
  const double gap_n = std::abs(cost(300) - ref);
  const double gap_2n = std::abs(cost(600) - ref);
  const double ratio = gap_n / gap_2n;  // ~2 for order-1 convergence
  CHECK(ratio > 2.0 / 1.5);
  CHECK(ratio < 2.0 * 1.5);
}

TEST_CASE("Euler global error scales as O(h) on x' = -x") {
  auto error_at = [](int nodes) {
    const ProblemSpec s = scalar_linear(-1.0, 1.0);
    const Trajectory traj =
        simulate(s, uniform_grid(s, nodes, Vec::Zero(1), Vec::Zero(0)), s.x0);
    return std::abs(traj.states.back()[0] - std::exp(-1.0));
  };
  const double ratio = error_at(101) / error_at(201);
  CHECK(ratio > 1.5);
  CHECK(ratio < 2.5);
}

TEST_CASE("double tank jacobians match central finite differences") {
  const ProblemSpec spec = make_double_tank();
  std::mt19937 rng(20240817);
  std::uniform_real_distribution<double> level(0.1, 6.0), flow(0.0, 10.0), bin(0.0, 1.0);
  const double h = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Vec x(2), u(2), c(2);
    x << level(rng), level(rng);
    u << std::round(bin(rng)), std::round(bin(rng));
    c << 10.0, flow(rng);
    const double t = flow(rng);
    const DynamicsJacobians J = spec.dynamics_jacobians(x, u, c, t);
    for (int i = 0; i < 2; ++i) {
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const Vec col = (spec.dynamics(xp, u, c, t) - spec.dynamics(xm, u, c, t)) / (2 * h);
      for (int r = 0; r < 2; ++r)
        worst = std::max(worst, std::abs(J.dfdx(r, i) - col[r]) / (1.0 + std::abs(col[r])));
      Vec cp = c, cm = c;
      cp[i] += h;
      cm[i] -= h;
      const Vec ccol = (spec.dynamics(x, u, cp, t) - spec.dynamics(x, u, cm, t)) / (2 * h);
      for (int r = 0; r < 2; ++r)
        worst = std::max(worst, std::abs(J.dfdc(r, i) - ccol[r]) / (1.0 + std::abs(ccol[r])));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("simulated cost is non-negative and x1 drains without inflow") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> flow(0.0, 10.0);
  for (int trial = 0; trial < 10; ++trial) {
    const double cost = double_tank_sim_cost(200, Eigen::Vector2d(trial % 2, (trial / 2) % 2),
                                             flow(rng));
    CHECK(cost >= 0.0);
  }
  const ProblemSpec spec = make_double_tank();
  Vec c(2);
  c << 10.0, 5.0;
  const Trajectory traj =
      simulate(spec, uniform_grid(spec, 200, Eigen::Vector2d(0, 0), c), spec.x0);
  for (int k = 1; k < traj.num_nodes(); ++k)
    CHECK(traj.states[k][0] <= traj.states[k - 1][0] + 1e-12);
}

TEST_CASE("trajectory CSV export writes the documented header") {
  const ProblemSpec spec = make_double_tank();
  Vec c(2);
  c << 10.0, 5.0;
  const Trajectory traj =
      simulate(spec, uniform_grid(spec, 5, Eigen::Vector2d(0, 1), c), spec.x0);
  const std::string path = "test_model_traj.csv";
  write_trajectory_csv(traj, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,x1,x2,u1,u2,c1,c2,running_cost");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == traj.num_nodes());
  std::remove(path.c_str());
}

TEST_CASE("config loader reads key=value constants and rejects unknown keys") {
  const std::string path = "test_model_config.txt";
  {
    std::ofstream out(path);
    out << "# comment\n"
        << "alpha = 50\n"
        << "gamma=8\n"
        << "tf = 5\n";
  }
  const DoubleTankConstants k = load_double_tank_config(path);
  CHECK(k.alpha == doctest::Approx(50.0));
  CHECK(k.gamma == doctest::Approx(8.0));
  CHECK(k.tf == doctest::Approx(5.0));
  CHECK(k.beta2 == doctest::Approx(1.1));  // untouched default
  {
    std::ofstream out(path);
    out << "bogus = 1\n";
  }
  CHECK_THROWS_AS(load_double_tank_config(path), std::runtime_error);
  std::remove(path.c_str());
}
