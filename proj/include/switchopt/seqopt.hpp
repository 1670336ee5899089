#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "switchopt/sto.hpp"

namespace switchopt {

/// Alternating slack/drive cost magnitudes per repetition count:
/// even k -> (10^k, 0), odd k -> (0, 10^k), capped at 1e8.
struct CostSchedule {
  double magnitude_cap = 1e8;
  int max_repetition() const { return 8; }
  /// Throws ScheduleExhausted when k exceeds max_repetition().
  std::pair<double, double> row(int k) const;
};

struct ScheduleExhausted : std::runtime_error {
  int stage;
  ScheduleExhausted(const std::string& msg, int stage_)
      : std::runtime_error(msg), stage(stage_) {}
};

/// Raised when the alternation schedule runs out for some stage, which the
/// termination argument attributes to an infeasible problem.
struct InfeasibleProblem : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IterationRecord {
  int iteration = 0;  // one record per STO solve
  Sequence sequence_before, sequence_after;
  std::vector<double> a, b;
  std::vector<int> repetition;
  std::vector<double> w, e;
  std::vector<int> removed;  // indices into sequence_before
  int candidate = -1;        // stage picked for cost alternation, -1 if none
  double cost = 0.0;
  int solver_iterations = 0;
  double wall_time_s = 0.0;
};

struct SequenceFilter {
  std::function<bool(const Sequence&)> accept;
};

struct IstoOptions {
  int nodes_per_stage = 0;  // 0: about 300 nodes split across the initial stages, min 20
  double min_uptime = 0.0;
  double eps_w = 1e-6;
  double eps_e = 1e-6;
  CostSchedule schedule;
  SolveOptions nlp;
};

struct IstoResult {
  StoSolution solution;
  std::vector<IterationRecord> records;
};

/// Iterative sequence optimization: repeated STO solves, largest-slack
/// candidate selection with alternating costs, removal of zero-dwell stages.
IstoResult run_isto(const ProblemSpec& spec, const Sequence& initial, const IstoOptions& opts,
                    const SequenceFilter* filter = nullptr);

/// Stages with w below eps_w dropped, order preserved. Throws if everything
/// would be removed.
std::pair<Sequence, std::vector<int>> remove_zero_stages(const DurationSet& w,
                                                         const Sequence& seq, double eps_w);

/// Index of the largest slack above eps_e; ties to the lowest index.
std::optional<int> select_candidate(const std::vector<double>& slacks, double eps_e);

/// Default initial sequence for the Double Tank problem:
/// {(1,1),(0,1),(1,0),(0,0),(1,1),(0,1),(1,0)}.
Sequence double_tank_initial_sequence();

/// Cyclic default sequence over the value set, optionally filtered.
Sequence enumerate_initial_sequence(const std::vector<Vec>& value_set, int length,
                                    const SequenceFilter* filter = nullptr);

void write_iteration_log_json(const std::vector<IterationRecord>& records,
                              const std::string& path);

}  // namespace switchopt
