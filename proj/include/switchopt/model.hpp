#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace switchopt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Thrown when a forward rollout produces a non-finite state.
struct IntegrationError : std::runtime_error {
  int node;
  IntegrationError(const std::string& msg, int node_) : std::runtime_error(msg), node(node_) {}
};

struct DynamicsJacobians {
  Mat dfdx;  // state_dim x state_dim
  Mat dfdu;  // state_dim x discrete_input_dim
  Mat dfdc;  // state_dim x continuous_input_dim
};

struct StageCostGradients {
  Vec dldx;
  Vec dldu;
  Vec dldc;
  double dldt = 0.0;
};

/// A switched optimal control problem. The discrete input u takes values
/// from a finite set; the continuous input c is box-bounded. Continuous
/// channels with lower == upper are treated as fixed constants by the
/// transcriptions.
struct ProblemSpec {
  int state_dim = 0;
  int discrete_input_dim = 0;
  int continuous_input_dim = 0;

  std::function<Vec(const Vec& x, const Vec& u, const Vec& c, double t)> dynamics;
  std::function<DynamicsJacobians(const Vec& x, const Vec& u, const Vec& c, double t)>
      dynamics_jacobians;
  // Optional df/dt; null means the dynamics are time invariant.
  std::function<Vec(const Vec& x, const Vec& u, const Vec& c, double t)> dynamics_time_partial;

  std::function<double(const Vec& x, const Vec& u, const Vec& c, double t)> stage_cost;
  std::function<StageCostGradients(const Vec& x, const Vec& u, const Vec& c, double t)>
      stage_cost_gradients;
  std::function<double(const Vec& x)> terminal_cost;  // null means zero

  Vec continuous_lower;
  Vec continuous_upper;
  std::vector<Vec> discrete_value_set;

  double t0 = 0.0;
  double tf = 0.0;
  Vec x0;

  double eval_terminal_cost(const Vec& x) const { return terminal_cost ? terminal_cost(x) : 0.0; }

  /// Throws std::invalid_argument on an inconsistent specification.
  void validate() const;
};

/// Constants of the two-pipe Double Tank instance. The defaults are the
/// reference values; tests pin them.
struct DoubleTankConstants {
  double alpha = 100.0;
  double beta1 = 1.0;
  double beta2 = 1.1;
  double gamma = 10.0;
  double tf = 10.0;
  double x0_1 = 2.0;
  double x0_2 = 2.5;
};

/// Tracking reference r(t) = 2 + 0.5 sin(t).
double reference(double t);
double reference_rate(double t);

/// sqrt(max(x, eps)) with eps = 1e-8, so the dynamics stay smooth near
/// empty-tank states. d/dx is 0 below the clamp.
double smooth_sqrt(double x);
double smooth_sqrt_deriv(double x);

/// Right-hand side of the Double Tank dynamics:
/// (sum_i u_i c_i - sqrt(x1), sqrt(x1) - sqrt(x2)).
Eigen::Vector2d double_tank_rhs(const Eigen::Vector2d& x, const Eigen::Vector2d& u,
                                const Eigen::Vector2d& c);

/// Assembles the Double Tank ProblemSpec (c1 fixed at gamma via equal bounds).
ProblemSpec make_double_tank(const DoubleTankConstants& k = {});

/// Piecewise-constant controls on a time grid: times has N nodes, controls
/// have N-1 intervals.
struct ControlGrid {
  std::vector<double> times;
  std::vector<Vec> discrete;
  std::vector<Vec> continuous;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> discrete_inputs;    // per interval
  std::vector<Vec> continuous_inputs;  // per interval
  std::vector<double> running_cost;    // per node, accumulated
  double total_cost = 0.0;             // final running cost + terminal cost

  int num_nodes() const { return static_cast<int>(times.size()); }
};

/// One explicit Euler step x + h*f(x,u,c,t).
Vec euler_step(const ProblemSpec& spec, const Vec& x, const Vec& u, const Vec& c, double t,
               double h);

/// Forward Euler rollout with left-endpoint cost quadrature.
Trajectory simulate(const ProblemSpec& spec, const ControlGrid& controls, const Vec& x0);

/// CSV export, header t,x1,x2,u1,u2,c1,c2,running_cost (column count follows
/// the problem dimensions). The last node repeats the final interval controls.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

/// key=value config file (lines starting with # ignored). Unknown keys throw.
DoubleTankConstants load_double_tank_config(const std::string& path);

}  // namespace switchopt
