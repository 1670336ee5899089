#pragma once

#include <string>
#include <vector>

#include "switchopt/relaxed.hpp"

namespace switchopt {

struct BinaryGrid {
  std::vector<double> t_left, t_right;
  std::vector<std::vector<int>> values;  // [control][interval], each 0/1

  int num_intervals() const { return static_cast<int>(t_left.size()); }
  int num_controls() const { return static_cast<int>(values.size()); }
};

struct DeviationBound {
  double eta = 0.0;  // max over controls and prefixes of |integrated deviation|
};

/// Greedy accumulator rounding, per control, no dwell constraints.
BinaryGrid sum_up_rounding(const RelaxedControlGrid& grid);

struct CiaOptions {
  double min_uptime = 0.0;
  long node_budget = 10'000'000;
};

struct CiaResult {
  BinaryGrid grid;
  DeviationBound bound;
  long nodes_expanded = 0;
  bool proven_optimal = true;  // false when the node budget ran out
};

/// Branch and bound minimizing the max accumulated deviation subject to
/// minimum uptime per control. Exhaustively optimal within the node budget;
/// ties resolved to the lexicographically smallest word (time-major,
/// control-minor). Runs of 1s truncated by the horizon end are exempt from
/// the uptime.
CiaResult solve_cia_bnb(const RelaxedControlGrid& grid, const CiaOptions& opts = {});

DeviationBound evaluate_eta(const RelaxedControlGrid& rel, const BinaryGrid& bin);

/// Independent run-length check of the min-uptime convention.
bool check_min_uptime(const BinaryGrid& grid, double min_uptime);

void write_binary_grid_csv(const BinaryGrid& grid, const std::string& path);
BinaryGrid load_binary_grid_csv(const std::string& path);

}  // namespace switchopt
