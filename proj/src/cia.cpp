#include "switchopt/cia.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace switchopt {

namespace {

std::vector<double> interval_lengths(const RelaxedControlGrid& grid) {
  std::vector<double> dt(grid.num_intervals());
  for (int k = 0; k < grid.num_intervals(); ++k) {
    dt[k] = grid.t_right[k] - grid.t_left[k];
    if (!(dt[k] > 0.0)) throw std::invalid_argument("cia: non-positive interval length");
  }
  return dt;
}

// Single-control branch and bound. Phase 1 finds the optimal eta, phase 2
// re-walks the tree in word order to pick the lexicographically smallest
// optimal word. Both phases accumulate deviations in the same order as
// evaluate_eta so comparisons stay exact.
struct ControlSearch {
  const std::vector<double>& rel;
  const std::vector<double>& dt;
  double uptime;
  long* budget;
  bool exhausted = false;

  int n = 0;
  double best_eta = std::numeric_limits<double>::infinity();
  std::vector<int> cur, best_word, lex_word;

  ControlSearch(const std::vector<double>& rel_, const std::vector<double>& dt_, double up,
                long* budget_)
      : rel(rel_), dt(dt_), uptime(up), budget(budget_), n(static_cast<int>(rel_.size())) {
    cur.assign(n, 0);
  }

  bool can_switch_off(double run) const { return run >= uptime - 1e-12; }

  void dfs_min(int k, double dev, double prefix_max, double run, bool on) {
    if (prefix_max >= best_eta) return;
    if (k == n) {
      best_eta = prefix_max;
      best_word = cur;
      return;
    }
    if (--*budget < 0) {
      exhausted = true;
      return;
    }
    const bool forced_on = on && !can_switch_off(run);
    const double dev_off = dev + rel[k] * dt[k];
    const double dev_on = dev + (rel[k] - 1.0) * dt[k];
    // Greedy order: expand the branch with smaller local deviation first.
    int order[2] = {std::abs(dev_on) < std::abs(dev_off) ? 1 : 0, 0};
    order[1] = 1 - order[0];
    for (int b : order) {
      if (b == 0 && forced_on) continue;
      const double d = b ? dev_on : dev_off;
      cur[k] = b;
      dfs_min(k + 1, d, std::max(prefix_max, std::abs(d)), b ? (on ? run + dt[k] : dt[k]) : 0.0,
              b != 0);
      if (exhausted) return;
    }
  }

  // First leaf in word order with eta <= threshold.
  bool dfs_lex(int k, double dev, double prefix_max, double run, bool on, double threshold) {
    if (prefix_max > threshold) return false;
    if (k == n) {
      lex_word = cur;
      return true;
    }
    if (--*budget < 0) {
      exhausted = true;
      return false;
    }
    const bool forced_on = on && !can_switch_off(run);
    for (int b = 0; b <= 1; ++b) {
      if (b == 0 && forced_on) continue;
      const double d = dev + (rel[k] - b) * dt[k];
      cur[k] = b;
      if (dfs_lex(k + 1, d, std::max(prefix_max, std::abs(d)),
                  b ? (on ? run + dt[k] : dt[k]) : 0.0, b != 0, threshold))
        return true;
      if (exhausted) return false;
    }
    return false;
  }
};

}  // namespace

BinaryGrid sum_up_rounding(const RelaxedControlGrid& grid) {
  const std::vector<double> dt = interval_lengths(grid);
  BinaryGrid out;
  out.t_left = grid.t_left;
  out.t_right = grid.t_right;
  out.values.resize(grid.num_controls());
  for (int i = 0; i < grid.num_controls(); ++i) {
    double acc = 0.0;
    out.values[i].resize(grid.num_intervals());
    for (int k = 0; k < grid.num_intervals(); ++k) {
      acc += grid.values[i][k] * dt[k];
      const int b = acc >= 0.5 * dt[k] ? 1 : 0;
      out.values[i][k] = b;
      acc -= b * dt[k];
    }
  }
  return out;
}

DeviationBound evaluate_eta(const RelaxedControlGrid& rel, const BinaryGrid& bin) {
  if (rel.num_intervals() != bin.num_intervals() || rel.num_controls() != bin.num_controls())
    throw std::invalid_argument("evaluate_eta: grid mismatch");
  const std::vector<double> dt = interval_lengths(rel);
  DeviationBound out;
  for (int i = 0; i < rel.num_controls(); ++i) {
    double acc = 0.0;
    for (int k = 0; k < rel.num_intervals(); ++k) {
      acc += (rel.values[i][k] - bin.values[i][k]) * dt[k];
      out.eta = std::max(out.eta, std::abs(acc));
    }
  }
  return out;
}

bool check_min_uptime(const BinaryGrid& grid, double min_uptime) {
  for (int i = 0; i < grid.num_controls(); ++i) {
    double run = 0.0;
    for (int k = 0; k < grid.num_intervals(); ++k) {
      if (grid.values[i][k]) {
        run += grid.t_right[k] - grid.t_left[k];
      } else {
        if (run > 0.0 && run < min_uptime - 1e-12) return false;
        run = 0.0;
      }
    }
    // A run touching the horizon end is exempt.
  }
  return true;
}

CiaResult solve_cia_bnb(const RelaxedControlGrid& grid, const CiaOptions& opts) {
  const std::vector<double> dt = interval_lengths(grid);
  for (int i = 0; i < grid.num_controls(); ++i)
    for (double v : grid.values[i])
      if (v < -1e-9 || v > 1.0 + 1e-9)
        throw std::invalid_argument("solve_cia_bnb: relaxed values outside [0,1]");

  CiaResult res;
  res.grid.t_left = grid.t_left;
  res.grid.t_right = grid.t_right;
  res.grid.values.resize(grid.num_controls());

  long budget = opts.node_budget;
  // With independent per-control constraints, min over grids of the max
  // deviation equals the max over controls of each control's own minimum.
  std::vector<ControlSearch> searches;
  searches.reserve(grid.num_controls());
  double eta_star = 0.0;
  for (int i = 0; i < grid.num_controls(); ++i) {
    searches.emplace_back(grid.values[i], dt, opts.min_uptime, &budget);
    searches[i].dfs_min(0, 0.0, 0.0, 0.0, false);
    if (searches[i].exhausted) res.proven_optimal = false;
    eta_star = std::max(eta_star, searches[i].best_eta);
  }
  for (int i = 0; i < grid.num_controls(); ++i) {
    ControlSearch& s = searches[i];
    if (res.proven_optimal && !s.dfs_lex(0, 0.0, 0.0, 0.0, false, eta_star)) {
      if (s.exhausted) res.proven_optimal = false;
    }
    res.grid.values[i] = s.lex_word.empty() ? s.best_word : s.lex_word;
    if (res.grid.values[i].empty())  // budget died before any leaf; all-off is always feasible
      res.grid.values[i].assign(grid.num_intervals(), 0);
  }
  res.nodes_expanded = opts.node_budget - std::max<long>(budget, 0);
  res.bound = evaluate_eta(grid, res.grid);
  return res;
}

void write_binary_grid_csv(const BinaryGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t_left,t_right";
  for (int i = 0; i < grid.num_controls(); ++i) out << ",u" << i + 1;
  out << '\n';
  char buf[64];
  for (int k = 0; k < grid.num_intervals(); ++k) {
    snprintf(buf, sizeof(buf), "%.12g,%.12g", grid.t_left[k], grid.t_right[k]);
    out << buf;
    for (int i = 0; i < grid.num_controls(); ++i) out << ',' << grid.values[i][k];
    out << '\n';
  }
}

BinaryGrid load_binary_grid_csv(const std::string& path) {
  const RelaxedControlGrid rel = load_control_grid_csv(path);
  BinaryGrid bin;
  bin.t_left = rel.t_left;
  bin.t_right = rel.t_right;
  bin.values.resize(rel.num_controls());
  for (int i = 0; i < rel.num_controls(); ++i) {
    bin.values[i].resize(rel.num_intervals());
    for (int k = 0; k < rel.num_intervals(); ++k) {
      const double v = rel.values[i][k];
      if (v != 0.0 && v != 1.0)
        throw std::invalid_argument(path + ": non-binary value in binary grid");
      bin.values[i][k] = static_cast<int>(v);
    }
  }
  return bin;
}

}  // namespace switchopt
