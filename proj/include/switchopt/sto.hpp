#pragma once

#include <optional>
#include <string>
#include <vector>

#include "switchopt/model.hpp"
#include "switchopt/nlp.hpp"

namespace switchopt {

/// Ordered operation stages; each stage is a discrete-input vector drawn
/// from the problem's value set.
struct Sequence {
  std::vector<Vec> stages;
  int size() const { return static_cast<int>(stages.size()); }
};

struct DurationSet {
  std::vector<double> w;
  int size() const { return static_cast<int>(w.size()); }
  double total() const;
};

/// Piecewise-constant dwell lookup w(tau) on [0, ns]; tau = ns returns the
/// last stage's duration.
double w_of_tau(const DurationSet& W, double tau);

/// t(tau') = w_0 + ... + w_{floor(tau')-1} + frac(tau') * w_{floor(tau')}.
double time_of_tau(const DurationSet& W, double tau);

/// Smallest tau with t(tau) = t'; plateaus from zero-duration stages resolve
/// to their left edge.
double tau_of_time(const DurationSet& W, double t);

/// Per-stage slack cost 0.5*a*e^2 and drive cost 0.5*b*w^2.
struct SlackCosts {
  std::vector<double> a, b;
};

/// Variable layout of the tau-domain transcription: states at tau-nodes,
/// dwell w per stage, slack e and timing residual sigma per stage, free
/// continuous inputs per tau-interval.
struct StoLayout {
  int nx = 0, ns = 0, m = 0, nfree = 0;
  int num_nodes() const { return ns * m + 1; }
  int num_intervals() const { return ns * m; }
  int x_index(int node, int i) const { return node * nx + i; }
  int w_index(int stage) const { return num_nodes() * nx + stage; }
  int e_index(int stage) const { return w_index(ns) + stage; }
  int sigma_index(int stage) const { return e_index(ns) + stage; }
  int c_index(int interval, int j) const { return sigma_index(ns) + interval * nfree + j; }
  int num_vars() const { return sigma_index(ns) + num_intervals() * nfree; }
  int num_eq() const { return nx + num_intervals() * nx + 1 + ns; }
};

struct StoSolution {
  Sequence sequence;
  DurationSet w;
  std::vector<double> slacks;     // e per stage
  double cost = 0.0;              // objective excluding slack/drive penalties
  double penalized_cost = 0.0;
  Trajectory trajectory;          // mapped to the t-domain, zero-length stages collapsed
  NlpSolution nlp;
  // Raw solve data kept for warm starts.
  Vec z;
  int nodes_per_stage = 0;
};

class StoTranscription {
 public:
  StoTranscription(const ProblemSpec& spec, Sequence seq, int nodes_per_stage,
                   std::vector<double> w_lower_bounds, SlackCosts costs);

  const NlpProblem& nlp() const { return nlp_; }
  const StoLayout& layout() const { return layout_; }
  const Sequence& sequence() const { return seq_; }

  /// Objective without the slack/drive penalty terms.
  double raw_cost(const Vec& z) const;
  StoSolution decode(const Vec& z, NlpSolution nlp_sol) const;

  /// Initial-guess vector mapped from a prior solution; kept[j] is the prior
  /// stage index of new stage j. Requires matching nodes_per_stage.
  Vec warm_start(const StoSolution& prior, const std::vector<int>& kept) const;

 private:
  ProblemSpec spec_;
  Sequence seq_;
  std::vector<double> lb_;
  SlackCosts costs_;
  StoLayout layout_;
  double dtau_ = 0.0;
  NlpProblem nlp_;
};

struct StoWarmStart {
  const StoSolution* prior = nullptr;
  std::vector<int> kept;  // new stage -> prior stage index; empty means identity
};

StoSolution solve_sto(const ProblemSpec& spec, const Sequence& seq, int nodes_per_stage,
                      const std::vector<double>& w_lower_bounds, const SlackCosts& costs,
                      const SolveOptions& opts = {}, const StoWarmStart& warm = {});

void write_sto_solution_json(const StoSolution& sol, const std::string& path);

}  // namespace switchopt
