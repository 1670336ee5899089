#include "switchopt/relaxed.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace switchopt {

Vec RelaxedTranscription::full_continuous(const Vec& z, int interval) const {
  Vec c = spec.continuous_lower;  // fixed channels sit at their pinned value
  for (size_t j = 0; j < free_continuous.size(); ++j)
    c[free_continuous[j]] = z[c_index(interval, static_cast<int>(j))];
  return c;
}

RelaxedTranscription transcribe_relaxed(const ProblemSpec& spec, int N) {
  if (N < 2) throw std::invalid_argument("transcribe_relaxed: N must be >= 2");
  spec.validate();

  RelaxedTranscription tr;
  tr.spec = spec;
  tr.N = N;
  tr.h = (spec.tf - spec.t0) / (N - 1);
  for (int j = 0; j < spec.continuous_input_dim; ++j)
    if (spec.continuous_lower[j] < spec.continuous_upper[j]) tr.free_continuous.push_back(j);

  const int nx = spec.state_dim;
  const int du = spec.discrete_input_dim;
  const int nfree = static_cast<int>(tr.free_continuous.size());
  const int n = N * nx + (N - 1) * (du + nfree);

  // Relaxed bounds for each discrete channel: convex hull of the value set.
  Vec u_lo = spec.discrete_value_set.front(), u_hi = spec.discrete_value_set.front();
  for (const Vec& v : spec.discrete_value_set) {
    u_lo = u_lo.cwiseMin(v);
    u_hi = u_hi.cwiseMax(v);
  }

  NlpProblem& p = tr.nlp;
  p.num_vars = n;
  p.num_eq = nx + (N - 1) * nx;
  p.lower = Vec::Constant(n, -std::numeric_limits<double>::infinity());
  p.upper = Vec::Constant(n, std::numeric_limits<double>::infinity());
  p.initial_guess = Vec::Zero(n);
  for (int k = 0; k < N; ++k)
    for (int i = 0; i < nx; ++i) p.initial_guess[tr.x_index(k, i)] = spec.x0[i];
  for (int k = 0; k < N - 1; ++k) {
    for (int i = 0; i < du; ++i) {
      p.lower[tr.u_index(k, i)] = u_lo[i];
      p.upper[tr.u_index(k, i)] = u_hi[i];
      p.initial_guess[tr.u_index(k, i)] = 0.5 * (u_lo[i] + u_hi[i]);
    }
    for (int j = 0; j < nfree; ++j) {
      const int ch = tr.free_continuous[j];
      p.lower[tr.c_index(k, j)] = spec.continuous_lower[ch];
      p.upper[tr.c_index(k, j)] = spec.continuous_upper[ch];
      p.initial_guess[tr.c_index(k, j)] =
          0.5 * (spec.continuous_lower[ch] + spec.continuous_upper[ch]);
    }
  }

  // Hessian coupling: within one interval, every pair among the interval's
  // states, both node states, discrete inputs, and free continuous inputs can
  // interact (through the dynamics and stage cost).
  for (int k = 0; k < N - 1; ++k) {
    std::vector<int> vars;
    for (int i = 0; i < nx; ++i) vars.push_back(tr.x_index(k, i));
    for (int i = 0; i < nx; ++i) vars.push_back(tr.x_index(k + 1, i));
    for (int i = 0; i < du; ++i) vars.push_back(tr.u_index(k, i));
    for (int j = 0; j < nfree; ++j) vars.push_back(tr.c_index(k, j));
    for (size_t a = 0; a < vars.size(); ++a)
      for (size_t b = a; b < vars.size(); ++b) p.hessian_pattern.emplace_back(vars[a], vars[b]);
  }

  // Left-endpoint quadrature of the stage cost over the intervals.
  const RelaxedTranscription layout = tr;  // value copy captured by the callbacks
  p.objective = [layout](const Vec& z, Vec* grad) -> double {
    const ProblemSpec& s = layout.spec;
    const int nx = s.state_dim;
    const int du = s.discrete_input_dim;
    double total = 0.0;
    if (grad) grad->setZero(z.size());
    for (int k = 0; k < layout.N - 1; ++k) {
      const Vec x = z.segment(layout.x_index(k, 0), nx);
      const Vec u = z.segment(layout.u_index(k, 0), du);
      const Vec c = layout.full_continuous(z, k);
      const double t = layout.node_time(k);
      total += layout.h * s.stage_cost(x, u, c, t);
      if (grad) {
        const StageCostGradients g = s.stage_cost_gradients(x, u, c, t);
        grad->segment(layout.x_index(k, 0), nx) += layout.h * g.dldx;
        grad->segment(layout.u_index(k, 0), du) += layout.h * g.dldu;
        for (size_t j = 0; j < layout.free_continuous.size(); ++j)
          (*grad)[layout.c_index(k, static_cast<int>(j))] +=
              layout.h * g.dldc[layout.free_continuous[j]];
      }
    }
    if (s.terminal_cost) {
      const Vec xf = z.segment(layout.x_index(layout.N - 1, 0), nx);
      total += s.terminal_cost(xf);
      if (grad) {
        // Terminal gradient by central differences; the reference instance
        // has no terminal cost so this path is exercised only by tests.
        Vec xp = xf, xm = xf;
        for (int i = 0; i < nx; ++i) {
          const double hh = 1e-7 * (1.0 + std::abs(xf[i]));
          xp[i] += hh;
          xm[i] -= hh;
          (*grad)[layout.x_index(layout.N - 1, i)] +=
              (s.terminal_cost(xp) - s.terminal_cost(xm)) / (2 * hh);
          xp[i] = xf[i];
          xm[i] = xf[i];
        }
      }
    }
    return total;
  };

  p.equality = [layout](const Vec& z, Vec& r, std::vector<Triplet>* jac) {
    const ProblemSpec& s = layout.spec;
    const int nx = s.state_dim;
    const int du = s.discrete_input_dim;
    for (int i = 0; i < nx; ++i) {
      r[i] = z[layout.x_index(0, i)] - s.x0[i];
      if (jac) jac->emplace_back(i, layout.x_index(0, i), 1.0);
    }
    for (int k = 0; k < layout.N - 1; ++k) {
      const Vec x = z.segment(layout.x_index(k, 0), nx);
      const Vec u = z.segment(layout.u_index(k, 0), du);
      const Vec c = layout.full_continuous(z, k);
      const double t = layout.node_time(k);
      const Vec f = s.dynamics(x, u, c, t);
      const int row0 = nx + k * nx;
      for (int i = 0; i < nx; ++i)
        r[row0 + i] = z[layout.x_index(k + 1, i)] - x[i] - layout.h * f[i];
      if (jac) {
        const DynamicsJacobians J = s.dynamics_jacobians(x, u, c, t);
        for (int i = 0; i < nx; ++i) {
          jac->emplace_back(row0 + i, layout.x_index(k + 1, i), 1.0);
          for (int j = 0; j < nx; ++j)
            jac->emplace_back(row0 + i, layout.x_index(k, j),
                              (i == j ? -1.0 : 0.0) - layout.h * J.dfdx(i, j));
          for (int j = 0; j < du; ++j)
            jac->emplace_back(row0 + i, layout.u_index(k, j), -layout.h * J.dfdu(i, j));
          for (size_t j = 0; j < layout.free_continuous.size(); ++j)
            jac->emplace_back(row0 + i, layout.c_index(k, static_cast<int>(j)),
                              -layout.h * J.dfdc(i, layout.free_continuous[j]));
        }
      }
    }
  };
  return tr;
}

Trajectory RelaxedTranscription::decode(const Vec& z) const {
  Trajectory traj;
  traj.times.resize(N);
  traj.states.resize(N);
  traj.discrete_inputs.resize(N - 1);
  traj.continuous_inputs.resize(N - 1);
  traj.running_cost.resize(N);
  double cost = 0.0;
  for (int k = 0; k < N; ++k) {
    traj.times[k] = node_time(k);
    traj.states[k] = z.segment(x_index(k, 0), spec.state_dim);
    if (k < N - 1) {
      traj.discrete_inputs[k] = z.segment(u_index(k, 0), spec.discrete_input_dim);
      traj.continuous_inputs[k] = full_continuous(z, k);
    }
    traj.running_cost[k] = cost;
    if (k < N - 1)
      cost += h * spec.stage_cost(traj.states[k], traj.discrete_inputs[k],
                                  traj.continuous_inputs[k], traj.times[k]);
  }
  traj.running_cost[N - 1] = cost;
  traj.total_cost = cost + spec.eval_terminal_cost(traj.states.back());
  return traj;
}

RelaxedControlGrid RelaxedTranscription::control_grid(const Vec& z) const {
  RelaxedControlGrid grid;
  grid.values.resize(spec.discrete_input_dim);
  for (int k = 0; k < N - 1; ++k) {
    grid.t_left.push_back(node_time(k));
    grid.t_right.push_back(node_time(k + 1));
    for (int i = 0; i < spec.discrete_input_dim; ++i)
      grid.values[i].push_back(z[u_index(k, i)]);
  }
  return grid;
}

RelaxedSolution solve_relaxed(const ProblemSpec& spec, int N, const SolveOptions& opts) {
  const RelaxedTranscription tr = transcribe_relaxed(spec, N);
  NlpSolution nlp_sol = solve(tr.nlp, opts);
  if (nlp_sol.status != SolveStatus::converged)
    throw SolverFailure("solve_relaxed: NLP did not converge (" +
                            std::string(to_string(nlp_sol.status)) + ")",
                        std::move(nlp_sol));
  RelaxedSolution sol;
  sol.trajectory = tr.decode(nlp_sol.z);
  sol.objective_value = nlp_sol.objective_value;
  sol.relaxed_control_grid = tr.control_grid(nlp_sol.z);
  sol.nlp = std::move(nlp_sol);
  return sol;
}

void write_control_grid_csv(const RelaxedControlGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t_left,t_right";
  for (int i = 0; i < grid.num_controls(); ++i) out << ",u" << i + 1;
  out << '\n';
  char buf[64];
  for (int k = 0; k < grid.num_intervals(); ++k) {
    snprintf(buf, sizeof(buf), "%.12g,%.12g", grid.t_left[k], grid.t_right[k]);
    out << buf;
    for (int i = 0; i < grid.num_controls(); ++i) {
      snprintf(buf, sizeof(buf), ",%.12g", grid.values[i][k]);
      out << buf;
    }
    out << '\n';
  }
}

RelaxedControlGrid load_control_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  int ncols = 1;
  for (char ch : line) ncols += ch == ',';
  if (ncols < 3) throw std::runtime_error(path + ": expected t_left,t_right,u...");
  RelaxedControlGrid grid;
  grid.values.resize(ncols - 2);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != ncols) throw std::runtime_error(path + ": ragged row");
    grid.t_left.push_back(row[0]);
    grid.t_right.push_back(row[1]);
    for (int i = 2; i < ncols; ++i) grid.values[i - 2].push_back(row[i]);
  }
  return grid;
}

}  // namespace switchopt
