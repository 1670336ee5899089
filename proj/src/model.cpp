#include "switchopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace switchopt {

namespace {
constexpr double kSqrtEps = 1e-8;

bool all_finite(const Vec& v) { return v.allFinite(); }
}  // namespace

double reference(double t) { return 2.0 + 0.5 * std::sin(t); }
double reference_rate(double t) { return 0.5 * std::cos(t); }

double smooth_sqrt(double x) { return std::sqrt(std::max(x, kSqrtEps)); }
double smooth_sqrt_deriv(double x) { return x > kSqrtEps ? 0.5 / std::sqrt(x) : 0.0; }

void ProblemSpec::validate() const {
  if (state_dim <= 0 || discrete_input_dim < 0 || continuous_input_dim < 0)
    throw std::invalid_argument("ProblemSpec: bad dimensions");
  if (!(tf > t0)) throw std::invalid_argument("ProblemSpec: tf must exceed t0");
  if (x0.size() != state_dim) throw std::invalid_argument("ProblemSpec: x0 size mismatch");
  if (continuous_lower.size() != continuous_input_dim ||
      continuous_upper.size() != continuous_input_dim)
    throw std::invalid_argument("ProblemSpec: continuous bound size mismatch");
  for (int j = 0; j < continuous_input_dim; ++j)
    if (!(continuous_lower[j] <= continuous_upper[j]))
      throw std::invalid_argument("ProblemSpec: continuous bounds inverted");
  if (discrete_value_set.empty())
    throw std::invalid_argument("ProblemSpec: discrete value set empty");
  for (const Vec& v : discrete_value_set)
    if (v.size() != discrete_input_dim)
      throw std::invalid_argument("ProblemSpec: discrete value size mismatch");
  if (!dynamics || !stage_cost) throw std::invalid_argument("ProblemSpec: missing callbacks");
}

Eigen::Vector2d double_tank_rhs(const Eigen::Vector2d& x, const Eigen::Vector2d& u,
                                const Eigen::Vector2d& c) {
  if (!x.allFinite() || !u.allFinite() || !c.allFinite())
    throw std::invalid_argument("double_tank_rhs: non-finite input");
  const double inflow = u[0] * c[0] + u[1] * c[1];
  const double s1 = smooth_sqrt(x[0]);
  const double s2 = smooth_sqrt(x[1]);
  return {inflow - s1, s1 - s2};
}

ProblemSpec make_double_tank(const DoubleTankConstants& k) {
  ProblemSpec spec;
  spec.state_dim = 2;
  spec.discrete_input_dim = 2;
  spec.continuous_input_dim = 2;
  spec.t0 = 0.0;
  spec.tf = k.tf;
  spec.x0 = Eigen::Vector2d(k.x0_1, k.x0_2);
  spec.continuous_lower = Eigen::Vector2d(k.gamma, 0.0);  // c1 pinned to gamma
  spec.continuous_upper = Eigen::Vector2d(k.gamma, k.gamma);
  spec.discrete_value_set = {Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 0),
                             Eigen::Vector2d(1, 1)};

  spec.dynamics = [](const Vec& x, const Vec& u, const Vec& c, double) -> Vec {
    return double_tank_rhs(x.head<2>(), u.head<2>(), c.head<2>());
  };
  spec.dynamics_jacobians = [](const Vec& x, const Vec& u, const Vec& c,
                               double) -> DynamicsJacobians {
    DynamicsJacobians J;
    const double d1 = smooth_sqrt_deriv(x[0]);
    const double d2 = smooth_sqrt_deriv(x[1]);
    J.dfdx = Mat(2, 2);
    J.dfdx << -d1, 0.0, d1, -d2;
    J.dfdu = Mat(2, 2);
    J.dfdu << c[0], c[1], 0.0, 0.0;
    J.dfdc = Mat(2, 2);
    J.dfdc << u[0], u[1], 0.0, 0.0;
    return J;
  };
  const double alpha = k.alpha;
  const double beta1 = k.beta1;
  const double beta2 = k.beta2;
  spec.stage_cost = [alpha, beta1, beta2](const Vec& x, const Vec& u, const Vec& c,
                                          double t) -> double {
    const double dev = x[1] - reference(t);
    return alpha * dev * dev + beta1 * u[0] * c[0] + beta2 * u[1] * c[1];
  };
  spec.stage_cost_gradients = [alpha, beta1, beta2](const Vec& x, const Vec& u, const Vec& c,
                                                    double t) -> StageCostGradients {
    StageCostGradients g;
    const double dev = x[1] - reference(t);
    g.dldx = Eigen::Vector2d(0.0, 2.0 * alpha * dev);
    g.dldu = Eigen::Vector2d(beta1 * c[0], beta2 * c[1]);
    g.dldc = Eigen::Vector2d(beta1 * u[0], beta2 * u[1]);
    g.dldt = -2.0 * alpha * dev * reference_rate(t);
    return g;
  };
  spec.validate();
  return spec;
}

Vec euler_step(const ProblemSpec& spec, const Vec& x, const Vec& u, const Vec& c, double t,
               double h) {
  if (!(h > 0.0)) throw std::invalid_argument("euler_step: step must be positive");
  Vec next = x + h * spec.dynamics(x, u, c, t);
  if (!all_finite(next)) throw IntegrationError("euler_step: non-finite state", -1);
  return next;
}

Trajectory simulate(const ProblemSpec& spec, const ControlGrid& controls, const Vec& x0) {
  const int nodes = static_cast<int>(controls.times.size());
  if (nodes < 1) throw std::invalid_argument("simulate: empty time grid");
  const int intervals = nodes - 1;
  if (static_cast<int>(controls.discrete.size()) != intervals ||
      static_cast<int>(controls.continuous.size()) != intervals)
    throw std::invalid_argument("simulate: control/grid size mismatch");
  for (int k = 0; k + 1 < nodes; ++k)
    if (!(controls.times[k + 1] > controls.times[k]))
      throw std::invalid_argument("simulate: time grid not strictly increasing");

  Trajectory traj;
  traj.times = controls.times;
  traj.discrete_inputs = controls.discrete;
  traj.continuous_inputs = controls.continuous;
  traj.states.reserve(nodes);
  traj.running_cost.reserve(nodes);

  Vec x = x0;
  double cost = 0.0;
  traj.states.push_back(x);
  traj.running_cost.push_back(0.0);
  for (int k = 0; k < intervals; ++k) {
    const double t = controls.times[k];
    const double h = controls.times[k + 1] - t;
    cost += h * spec.stage_cost(x, controls.discrete[k], controls.continuous[k], t);
    x = x + h * spec.dynamics(x, controls.discrete[k], controls.continuous[k], t);
    if (!all_finite(x)) throw IntegrationError("simulate: non-finite state at node", k + 1);
    traj.states.push_back(x);
    traj.running_cost.push_back(cost);
  }
  traj.total_cost = cost + spec.eval_terminal_cost(x);
  return traj;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  const int nx = traj.states.empty() ? 0 : static_cast<int>(traj.states.front().size());
  const int nu = traj.discrete_inputs.empty() ? 0 : static_cast<int>(traj.discrete_inputs.front().size());
  const int nc = traj.continuous_inputs.empty() ? 0 : static_cast<int>(traj.continuous_inputs.front().size());
  out << "t";
  for (int i = 0; i < nx; ++i) out << ",x" << i + 1;
  for (int i = 0; i < nu; ++i) out << ",u" << i + 1;
  for (int i = 0; i < nc; ++i) out << ",c" << i + 1;
  out << ",running_cost\n";
  char buf[64];
  auto put = [&](double v) {
    snprintf(buf, sizeof(buf), "%.12g", v);
    out << ',' << buf;
  };
  const int nodes = traj.num_nodes();
  for (int k = 0; k < nodes; ++k) {
    snprintf(buf, sizeof(buf), "%.12g", traj.times[k]);
    out << buf;
    const int ctrl = std::min(k, nodes - 2);  // last node repeats final interval controls
    for (int i = 0; i < nx; ++i) put(traj.states[k][i]);
    if (ctrl >= 0) {
      for (int i = 0; i < nu; ++i) put(traj.discrete_inputs[ctrl][i]);
      for (int i = 0; i < nc; ++i) put(traj.continuous_inputs[ctrl][i]);
    }
    put(traj.running_cost[k]);
    out << '\n';
  }
}

DoubleTankConstants load_double_tank_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  DoubleTankConstants k;
  std::map<std::string, double*> keys = {
      {"alpha", &k.alpha}, {"beta1", &k.beta1}, {"beta2", &k.beta2}, {"gamma", &k.gamma},
      {"tf", &k.tf},       {"x0_1", &k.x0_1},   {"x0_2", &k.x0_2}};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(first, eq - first);
    key.erase(key.find_last_not_of(" \t") + 1);
    auto it = keys.find(key);
    if (it == keys.end())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    *it->second = std::stod(line.substr(eq + 1));
  }
  return k;
}

}  // namespace switchopt
