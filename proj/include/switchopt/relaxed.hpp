#pragma once

#include <string>
#include <vector>

#include "switchopt/model.hpp"
#include "switchopt/nlp.hpp"

namespace switchopt {

/// Piecewise-constant relaxed controls on a grid, one row of values per
/// discrete control channel.
struct RelaxedControlGrid {
  std::vector<double> t_left, t_right;
  std::vector<std::vector<double>> values;  // [control][interval]

  int num_intervals() const { return static_cast<int>(t_left.size()); }
  int num_controls() const { return static_cast<int>(values.size()); }
};

/// Direct multiple-shooting transcription of the relaxed problem: states at
/// nodes, relaxed discrete inputs and free continuous inputs per interval,
/// explicit Euler matching conditions.
struct RelaxedTranscription {
  ProblemSpec spec;
  int N = 0;      // node count
  double h = 0.0; // uniform step
  std::vector<int> free_continuous;  // channels with lower < upper
  NlpProblem nlp;

  int x_index(int node, int i) const { return node * spec.state_dim + i; }
  int u_index(int interval, int i) const {
    return N * spec.state_dim + interval * spec.discrete_input_dim + i;
  }
  int c_index(int interval, int j) const {
    return N * spec.state_dim + (N - 1) * spec.discrete_input_dim +
           interval * static_cast<int>(free_continuous.size()) + j;
  }
  double node_time(int k) const { return spec.t0 + k * h; }
  Vec full_continuous(const Vec& z, int interval) const;

  Trajectory decode(const Vec& z) const;
  RelaxedControlGrid control_grid(const Vec& z) const;
};

RelaxedTranscription transcribe_relaxed(const ProblemSpec& spec, int N);

struct RelaxedSolution {
  Trajectory trajectory;
  double objective_value = 0.0;
  RelaxedControlGrid relaxed_control_grid;
  NlpSolution nlp;
};

RelaxedSolution solve_relaxed(const ProblemSpec& spec, int N, const SolveOptions& opts = {});

void write_control_grid_csv(const RelaxedControlGrid& grid, const std::string& path);
RelaxedControlGrid load_control_grid_csv(const std::string& path);

}  // namespace switchopt
