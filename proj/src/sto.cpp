#include "switchopt/sto.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace switchopt {

double DurationSet::total() const {
  double s = 0.0;
  for (double wi : w) s += wi;
  return s;
}

double w_of_tau(const DurationSet& W, double tau) {
  const int ns = W.size();
  if (ns == 0) throw std::invalid_argument("w_of_tau: empty duration set");
  if (tau < 0.0 || tau > ns) throw std::invalid_argument("w_of_tau: tau outside [0, ns]");
  const int i = std::min(static_cast<int>(std::floor(tau)), ns - 1);
  return W.w[i];
}

double time_of_tau(const DurationSet& W, double tau) {
  const int ns = W.size();
  if (ns == 0) throw std::invalid_argument("time_of_tau: empty duration set");
  if (tau < 0.0 || tau > ns) throw std::invalid_argument("time_of_tau: tau outside [0, ns]");
  const int i = std::min(static_cast<int>(std::floor(tau)), ns - 1);
  double t = 0.0;
  for (int j = 0; j < i; ++j) t += W.w[j];
  return t + (tau - i) * W.w[i];
}

double tau_of_time(const DurationSet& W, double t) {
  const int ns = W.size();
  if (ns == 0) throw std::invalid_argument("tau_of_time: empty duration set");
  const double total = W.total();
  const double slack = 1e-9 * std::max(1.0, total);
  if (t < -slack || t > total + slack)
    throw std::invalid_argument("tau_of_time: t outside [0, total]");
  t = std::clamp(t, 0.0, total);
  double acc = 0.0;
  for (int i = 0; i < ns; ++i) {
    if (t <= acc) return i;
    if (t < acc + W.w[i]) return i + (t - acc) / W.w[i];
    acc += W.w[i];
  }
  return ns;
}

namespace {

std::vector<int> free_channels(const ProblemSpec& spec) {
  std::vector<int> f;
  for (int j = 0; j < spec.continuous_input_dim; ++j)
    if (spec.continuous_lower[j] < spec.continuous_upper[j]) f.push_back(j);
  return f;
}

}  // namespace

// Shared assembly state captured by the NLP callbacks.
struct StoAssembly {
  ProblemSpec spec;
  Sequence seq;
  std::vector<double> lb;
  SlackCosts costs;
  StoLayout layout;
  std::vector<int> free_c;
  double dtau = 0.0;
  // Tiny quadratic term on e and sigma so the timing slacks are uniquely
  // determined even when a_i = 0: with it, e_i equals max(0, lb_i - w_i).
  double slack_reg = 0.0;

  Vec full_continuous(const Vec& z, int interval) const {
    Vec c = spec.continuous_lower;
    for (size_t j = 0; j < free_c.size(); ++j)
      c[free_c[j]] = z[layout.c_index(interval, static_cast<int>(j))];
    return c;
  }

  // theta[j] = how much of stage j has elapsed (in stage units) at tau-node k.
  double theta(int node, int stage) const {
    return std::clamp(static_cast<double>(node) / layout.m - stage, 0.0, 1.0);
  }

  double node_time(const Vec& z, int node) const {
    double t = spec.t0;
    for (int j = 0; j < layout.ns; ++j) {
      const double th = theta(node, j);
      if (th <= 0.0) break;
      t += th * z[layout.w_index(j)];
    }
    return t;
  }

  double objective(const Vec& z, Vec* grad) const {
    const int nx = layout.nx;
    double total = 0.0;
    if (grad) grad->setZero(z.size());
    for (int k = 0; k < layout.num_intervals(); ++k) {
      const int s = k / layout.m;
      const double ws = z[layout.w_index(s)];
      const Vec x = z.segment(layout.x_index(k, 0), nx);
      const Vec& u = seq.stages[s];
      const Vec c = full_continuous(z, k);
      const double t = node_time(z, k);
      const double L = spec.stage_cost(x, u, c, t);
      total += dtau * ws * L;
      if (grad) {
        const StageCostGradients g = spec.stage_cost_gradients(x, u, c, t);
        grad->segment(layout.x_index(k, 0), nx) += dtau * ws * g.dldx;
        for (size_t j = 0; j < free_c.size(); ++j)
          (*grad)[layout.c_index(k, static_cast<int>(j))] += dtau * ws * g.dldc[free_c[j]];
        (*grad)[layout.w_index(s)] += dtau * L;
        // r(t(tau)) couples every earlier dwell through the node time.
        for (int j = 0; j <= s; ++j) {
          const double th = theta(k, j);
          if (th > 0.0) (*grad)[layout.w_index(j)] += dtau * ws * g.dldt * th;
        }
      }
    }
    for (int i = 0; i < layout.ns; ++i) {
      const double wi = z[layout.w_index(i)];
      const double ei = z[layout.e_index(i)];
      const double si = z[layout.sigma_index(i)];
      total += 0.5 * costs.a[i] * ei * ei + 0.5 * costs.b[i] * wi * wi +
               0.5 * slack_reg * (ei * ei + si * si);
      if (grad) {
        (*grad)[layout.e_index(i)] += (costs.a[i] + slack_reg) * ei;
        (*grad)[layout.w_index(i)] += costs.b[i] * wi;
        (*grad)[layout.sigma_index(i)] += slack_reg * si;
      }
    }
    if (spec.terminal_cost) {
      const int last = layout.num_intervals();
      const Vec xf = z.segment(layout.x_index(last, 0), nx);
      total += spec.terminal_cost(xf);
      if (grad) {
        Vec xp = xf, xm = xf;
        for (int i = 0; i < nx; ++i) {
          const double hh = 1e-7 * (1.0 + std::abs(xf[i]));
          xp[i] += hh;
          xm[i] -= hh;
          (*grad)[layout.x_index(last, i)] +=
              (spec.terminal_cost(xp) - spec.terminal_cost(xm)) / (2 * hh);
          xp[i] = xf[i];
          xm[i] = xf[i];
        }
      }
    }
    return total;
  }

  void equality(const Vec& z, Vec& r, std::vector<Triplet>* jac) const {
    const int nx = layout.nx;
    for (int i = 0; i < nx; ++i) {
      r[i] = z[layout.x_index(0, i)] - spec.x0[i];
      if (jac) jac->emplace_back(i, layout.x_index(0, i), 1.0);
    }
    for (int k = 0; k < layout.num_intervals(); ++k) {
      const int s = k / layout.m;
      const double ws = z[layout.w_index(s)];
      const Vec x = z.segment(layout.x_index(k, 0), nx);
      const Vec& u = seq.stages[s];
      const Vec c = full_continuous(z, k);
      const double t = node_time(z, k);
      const Vec f = spec.dynamics(x, u, c, t);
      const int row0 = nx + k * nx;
      for (int i = 0; i < nx; ++i)
        r[row0 + i] = z[layout.x_index(k + 1, i)] - x[i] - dtau * ws * f[i];
      if (jac) {
        const DynamicsJacobians J = spec.dynamics_jacobians(x, u, c, t);
        Vec ft;
        if (spec.dynamics_time_partial) ft = spec.dynamics_time_partial(x, u, c, t);
        for (int i = 0; i < nx; ++i) {
          jac->emplace_back(row0 + i, layout.x_index(k + 1, i), 1.0);
          for (int j = 0; j < nx; ++j)
            jac->emplace_back(row0 + i, layout.x_index(k, j),
                              (i == j ? -1.0 : 0.0) - dtau * ws * J.dfdx(i, j));
          for (size_t j = 0; j < free_c.size(); ++j)
            jac->emplace_back(row0 + i, layout.c_index(k, static_cast<int>(j)),
                              -dtau * ws * J.dfdc(i, free_c[j]));
          jac->emplace_back(row0 + i, layout.w_index(s), -dtau * f[i]);
          if (ft.size())
            for (int j = 0; j <= s; ++j) {
              const double th = theta(k, j);
              if (th > 0.0) jac->emplace_back(row0 + i, layout.w_index(j), -dtau * ws * ft[i] * th);
            }
        }
      }
    }
    const int row_time = nx + layout.num_intervals() * nx;
    r[row_time] = -(spec.tf - spec.t0);
    for (int i = 0; i < layout.ns; ++i) {
      r[row_time] += z[layout.w_index(i)];
      if (jac) jac->emplace_back(row_time, layout.w_index(i), 1.0);
    }
    // Softened timing bound: w_i + e_i - sigma_i = lb_i with sigma_i >= 0.
    for (int i = 0; i < layout.ns; ++i) {
      const int row = row_time + 1 + i;
      r[row] = z[layout.w_index(i)] + z[layout.e_index(i)] - z[layout.sigma_index(i)] - lb[i];
      if (jac) {
        jac->emplace_back(row, layout.w_index(i), 1.0);
        jac->emplace_back(row, layout.e_index(i), 1.0);
        jac->emplace_back(row, layout.sigma_index(i), -1.0);
      }
    }
  }
};

StoTranscription::StoTranscription(const ProblemSpec& spec, Sequence seq, int nodes_per_stage,
                                   std::vector<double> w_lower_bounds, SlackCosts costs)
    : spec_(spec), seq_(std::move(seq)), lb_(std::move(w_lower_bounds)), costs_(std::move(costs)) {
  spec_.validate();
  if (seq_.size() < 1) throw std::invalid_argument("StoTranscription: empty sequence");
  if (nodes_per_stage < 1) throw std::invalid_argument("StoTranscription: nodes_per_stage < 1");
  const int ns = seq_.size();
  if (lb_.empty()) lb_.assign(ns, 0.0);
  if (static_cast<int>(lb_.size()) != ns ||
      static_cast<int>(costs_.a.size()) != ns || static_cast<int>(costs_.b.size()) != ns)
    throw std::invalid_argument("StoTranscription: per-stage vector size mismatch");
  for (const Vec& u : seq_.stages)
    if (u.size() != spec_.discrete_input_dim)
      throw std::invalid_argument("StoTranscription: stage dimension mismatch");

  auto asm_state = std::make_shared<StoAssembly>();
  asm_state->spec = spec_;
  asm_state->seq = seq_;
  asm_state->lb = lb_;
  asm_state->costs = costs_;
  asm_state->free_c = free_channels(spec_);
  asm_state->layout = StoLayout{spec_.state_dim, ns, nodes_per_stage,
                                static_cast<int>(asm_state->free_c.size())};
  asm_state->dtau = 1.0 / nodes_per_stage;
  asm_state->slack_reg = 1e-8;
  layout_ = asm_state->layout;
  dtau_ = asm_state->dtau;

  const StoLayout& L = layout_;
  const double inf = std::numeric_limits<double>::infinity();
  nlp_.num_vars = L.num_vars();
  nlp_.num_eq = L.num_eq();
  nlp_.lower = Vec::Constant(nlp_.num_vars, -inf);
  nlp_.upper = Vec::Constant(nlp_.num_vars, inf);
  nlp_.initial_guess = Vec::Zero(nlp_.num_vars);
  for (int k = 0; k < L.num_nodes(); ++k)
    for (int i = 0; i < L.nx; ++i) nlp_.initial_guess[L.x_index(k, i)] = spec_.x0[i];
  const double w0 = (spec_.tf - spec_.t0) / ns;
  for (int i = 0; i < ns; ++i) {
    nlp_.lower[L.w_index(i)] = 0.0;
    nlp_.lower[L.e_index(i)] = 0.0;
    nlp_.lower[L.sigma_index(i)] = 0.0;
    // A stage without a timing bound has a vacuous softened constraint
    // (w >= 0 already holds as a bound); pin its slack at zero instead of
    // carrying an indeterminate variable.
    if (lb_[i] <= 0.0) nlp_.upper[L.e_index(i)] = 0.0;
    nlp_.initial_guess[L.w_index(i)] = w0;
    nlp_.initial_guess[L.sigma_index(i)] = std::max(0.0, w0 - lb_[i]);
  }
  for (int k = 0; k < L.num_intervals(); ++k)
    for (int j = 0; j < L.nfree; ++j) {
      const int ch = asm_state->free_c[j];
      nlp_.lower[L.c_index(k, j)] = spec_.continuous_lower[ch];
      nlp_.upper[L.c_index(k, j)] = spec_.continuous_upper[ch];
      nlp_.initial_guess[L.c_index(k, j)] =
          0.5 * (spec_.continuous_lower[ch] + spec_.continuous_upper[ch]);
    }
  // Hessian coupling: an interval's node states and free continuous inputs
  // interact with each other and with every dwell up to the interval's stage
  // (node times chain through all earlier dwells); each timing row couples its
  // stage's dwell and slacks; the total-time row couples all dwell pairs.
  for (int k = 0; k < L.num_intervals(); ++k) {
    const int s = k / L.m;
    std::vector<int> vars;
    for (int i = 0; i < L.nx; ++i) vars.push_back(L.x_index(k, i));
    for (int i = 0; i < L.nx; ++i) vars.push_back(L.x_index(k + 1, i));
    for (int j = 0; j < L.nfree; ++j) vars.push_back(L.c_index(k, j));
    for (int j = 0; j <= s; ++j) vars.push_back(L.w_index(j));
    for (size_t a = 0; a < vars.size(); ++a)
      for (size_t b = a; b < vars.size(); ++b) nlp_.hessian_pattern.emplace_back(vars[a], vars[b]);
  }
  for (int i = 0; i < ns; ++i) {
    for (int j = i; j < ns; ++j) nlp_.hessian_pattern.emplace_back(L.w_index(i), L.w_index(j));
    const int trio[3] = {L.w_index(i), L.e_index(i), L.sigma_index(i)};
    for (int a = 0; a < 3; ++a)
      for (int b = a; b < 3; ++b) nlp_.hessian_pattern.emplace_back(trio[a], trio[b]);
  }

  nlp_.objective = [asm_state](const Vec& z, Vec* grad) { return asm_state->objective(z, grad); };
  nlp_.equality = [asm_state](const Vec& z, Vec& r, std::vector<Triplet>* jac) {
    asm_state->equality(z, r, jac);
  };
}

double StoTranscription::raw_cost(const Vec& z) const {
  StoAssembly a;
  a.spec = spec_;
  a.seq = seq_;
  a.lb = lb_;
  a.costs.a.assign(layout_.ns, 0.0);
  a.costs.b.assign(layout_.ns, 0.0);
  a.free_c = free_channels(spec_);
  a.layout = layout_;
  a.dtau = dtau_;
  return a.objective(z, nullptr);
}

StoSolution StoTranscription::decode(const Vec& z, NlpSolution nlp_sol) const {
  const StoLayout& L = layout_;
  StoSolution sol;
  sol.sequence = seq_;
  sol.nodes_per_stage = L.m;
  sol.z = z;
  sol.w.w.resize(L.ns);
  sol.slacks.resize(L.ns);
  for (int i = 0; i < L.ns; ++i) {
    sol.w.w[i] = z[L.w_index(i)];
    // Normalized slack: the optimizer leaves e underdetermined when its cost
    // weight is zero, but at any optimum the meaningful value is the timing
    // violation itself.
    sol.slacks[i] = std::max(0.0, lb_[i] - z[L.w_index(i)]);
  }
  sol.cost = raw_cost(z);
  sol.penalized_cost = nlp_sol.objective_value;
  sol.nlp = std::move(nlp_sol);

  StoAssembly a;
  a.spec = spec_;
  a.seq = seq_;
  a.free_c = free_channels(spec_);
  a.layout = L;
  a.dtau = dtau_;

  // Map back to the t-domain, dropping zero-length intervals.
  Trajectory& traj = sol.trajectory;
  traj.times.push_back(spec_.t0);
  traj.states.push_back(z.segment(L.x_index(0, 0), L.nx));
  traj.running_cost.push_back(0.0);
  double t = spec_.t0, cost = 0.0;
  for (int k = 0; k < L.num_intervals(); ++k) {
    const int s = k / L.m;
    const double len = dtau_ * z[L.w_index(s)];
    if (len <= 1e-12) continue;
    const Vec x = z.segment(L.x_index(k, 0), L.nx);
    const Vec c = a.full_continuous(z, k);
    cost += len * spec_.stage_cost(x, seq_.stages[s], c, t);
    t += len;
    traj.discrete_inputs.push_back(seq_.stages[s]);
    traj.continuous_inputs.push_back(c);
    traj.times.push_back(t);
    traj.states.push_back(z.segment(L.x_index(k + 1, 0), L.nx));
    traj.running_cost.push_back(cost);
  }
  traj.total_cost = cost + spec_.eval_terminal_cost(traj.states.back());
  return sol;
}

Vec StoTranscription::warm_start(const StoSolution& prior, const std::vector<int>& kept) const {
  const StoLayout& L = layout_;
  if (static_cast<int>(kept.size()) != L.ns)
    throw std::invalid_argument("warm_start: kept size mismatch");
  if (prior.nodes_per_stage < 1)
    throw std::invalid_argument("warm_start: prior has no nodes_per_stage");
  const StoLayout prev{L.nx, prior.sequence.size(), prior.nodes_per_stage, L.nfree};
  const int mo = prev.m;
  Vec g = nlp_.initial_guess;
  for (int j = 0; j < L.ns; ++j) {
    const int q = kept[j];
    if (q < 0 || q >= prev.ns) throw std::invalid_argument("warm_start: kept index out of range");
    g[L.w_index(j)] = prior.z[prev.w_index(q)];
    g[L.e_index(j)] = prior.z[prev.e_index(q)];
    g[L.sigma_index(j)] = prior.z[prev.sigma_index(q)];
    for (int l = 0; l < L.m; ++l) {
      const int kn = j * L.m + l;
      // States: linear interpolation in the stage-local tau coordinate, so
      // node grids of different resolution map onto each other.
      const double pos = static_cast<double>(l) * mo / L.m;
      const int i0 = std::min(mo - 1, static_cast<int>(pos));
      const double frac = pos - i0;
      for (int i = 0; i < L.nx; ++i)
        g[L.x_index(kn, i)] = (1.0 - frac) * prior.z[prev.x_index(q * mo + i0, i)] +
                              frac * prior.z[prev.x_index(q * mo + i0 + 1, i)];
      // Piecewise-constant controls: take the prior interval covering the new
      // interval's midpoint.
      const int co = std::min(mo - 1, static_cast<int>((l + 0.5) * mo / L.m));
      for (int c = 0; c < L.nfree; ++c) g[L.c_index(kn, c)] = prior.z[prev.c_index(q * mo + co, c)];
    }
  }
  for (int i = 0; i < L.nx; ++i)
    g[L.x_index(L.num_intervals(), i)] = prior.z[prev.x_index(prev.num_intervals(), i)];
  return g;
}

StoSolution solve_sto(const ProblemSpec& spec, const Sequence& seq, int nodes_per_stage,
                      const std::vector<double>& w_lower_bounds, const SlackCosts& costs,
                      const SolveOptions& opts, const StoWarmStart& warm) {
  StoTranscription tr(spec, seq, nodes_per_stage, w_lower_bounds, costs);
  NlpProblem p = tr.nlp();
  SolveOptions o = opts;
  if (warm.prior) {
    std::vector<int> kept = warm.kept;
    if (kept.empty())
      for (int i = 0; i < seq.size(); ++i) kept.push_back(i);
    p.initial_guess = tr.warm_start(*warm.prior, kept);
    if (warm.prior->sequence.size() == seq.size() &&
        warm.prior->nlp.eq_multipliers.size() == p.num_eq)
      o.lambda0 = warm.prior->nlp.eq_multipliers;
  }
  NlpSolution nlp_sol = solve(p, o);
  if (nlp_sol.status != SolveStatus::converged)
    throw SolverFailure("solve_sto: NLP did not converge (" +
                            std::string(to_string(nlp_sol.status)) + ")",
                        std::move(nlp_sol));
  const Vec z = nlp_sol.z;  // copy first: decode's second argument moves nlp_sol
  return tr.decode(z, std::move(nlp_sol));
}

void write_sto_solution_json(const StoSolution& sol, const std::string& path) {
  nlohmann::json j;
  j["sequence"] = nlohmann::json::array();
  for (const Vec& u : sol.sequence.stages) {
    std::vector<double> row(u.data(), u.data() + u.size());
    j["sequence"].push_back(row);
  }
  j["w"] = sol.w.w;
  j["e"] = sol.slacks;
  j["cost"] = sol.cost;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << '\n';
}

}  // namespace switchopt
