#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "switchopt/cia.hpp"
#include "switchopt/model.hpp"
#include "switchopt/relaxed.hpp"
#include "switchopt/seqopt.hpp"
#include "switchopt/sto.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace switchopt;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitSolverFailure = 3;
constexpr int kExitInfeasible = 4;

struct RunConfig {
  DoubleTankConstants constants;
  std::string config_file;
  int nodes = 300;        // relaxed transcription nodes
  int stage_nodes = 0;    // STO nodes per stage, 0 = automatic
  double min_uptime = 0.5;
  std::string out_dir = "out";

  ProblemSpec spec() const { return make_double_tank(constants); }

  void finalize() {
    if (!config_file.empty()) constants = load_double_tank_config(config_file);
    if (nodes < 2) throw std::invalid_argument("nodes must be >= 2");
    if (min_uptime < 0) throw std::invalid_argument("min-uptime must be >= 0");
    if (!(constants.tf > 0)) throw std::invalid_argument("tf must be positive");
    fs::create_directories(out_dir);
  }
  std::string path(const std::string& name) const { return (fs::path(out_dir) / name).string(); }
};

void add_common(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--config", cfg.config_file, "key=value problem constants file");
  cmd->add_option("--nodes", cfg.nodes, "relaxed transcription node count");
  cmd->add_option("--stage-nodes", cfg.stage_nodes, "STO nodes per stage (0 = automatic)");
  cmd->add_option("--min-uptime", cfg.min_uptime, "minimum uptime in seconds (0 disables)");
  cmd->add_option("--out-dir", cfg.out_dir, "output directory");
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << '\n';
}

double now_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct RelaxOutputs {
  RelaxedSolution sol;
  double wall_time = 0.0;
};

RelaxOutputs run_relax(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  RelaxOutputs out;
  out.sol = solve_relaxed(cfg.spec(), cfg.nodes);
  out.wall_time = now_since(t0);
  return out;
}

void emit_relax(const RunConfig& cfg, const RelaxOutputs& r) {
  write_trajectory_csv(r.sol.trajectory, cfg.path("relaxed_trajectory.csv"));
  write_control_grid_csv(r.sol.relaxed_control_grid, cfg.path("relaxed_grid.csv"));
  json rep;
  rep["objective"] = r.sol.objective_value;
  rep["status"] = to_string(r.sol.nlp.status);
  rep["iterations"] = r.sol.nlp.iterations;
  rep["eq_residual"] = r.sol.nlp.eq_residual_norm;
  rep["kkt_residual"] = r.sol.nlp.kkt_residual;
  rep["wall_time_s"] = r.wall_time;
  write_json(rep, cfg.path("relax_report.json"));
  std::cout << "relaxed objective = " << r.sol.objective_value << "\n";
}

// Continuous inputs for simulating a projected grid: taken from the relaxed
// trajectory when available, mid-bounds otherwise.
std::vector<Vec> continuous_profile(const ProblemSpec& spec, const RelaxedSolution* relaxed,
                                    int intervals) {
  std::vector<Vec> c(intervals);
  for (int k = 0; k < intervals; ++k) {
    if (relaxed && k < static_cast<int>(relaxed->trajectory.continuous_inputs.size()))
      c[k] = relaxed->trajectory.continuous_inputs[k];
    else
      c[k] = 0.5 * (spec.continuous_lower + spec.continuous_upper);
  }
  return c;
}

struct RoundOutputs {
  CiaResult cia;
  Trajectory simulated;
  double wall_time = 0.0;
};

RoundOutputs run_round(const RunConfig& cfg, const RelaxedControlGrid& grid,
                       const RelaxedSolution* relaxed) {
  const auto t0 = std::chrono::steady_clock::now();
  RoundOutputs out;
  CiaOptions copts;
  copts.min_uptime = cfg.min_uptime;
  out.cia = solve_cia_bnb(grid, copts);
  const ProblemSpec spec = cfg.spec();
  ControlGrid controls;
  controls.times = out.cia.grid.t_left;
  controls.times.push_back(out.cia.grid.t_right.back());
  const int intervals = out.cia.grid.num_intervals();
  controls.continuous = continuous_profile(spec, relaxed, intervals);
  controls.discrete.resize(intervals);
  for (int k = 0; k < intervals; ++k) {
    Vec u(out.cia.grid.num_controls());
    for (int i = 0; i < out.cia.grid.num_controls(); ++i) u[i] = out.cia.grid.values[i][k];
    controls.discrete[k] = u;
  }
  out.simulated = simulate(spec, controls, spec.x0);
  out.wall_time = now_since(t0);
  return out;
}

void emit_round(const RunConfig& cfg, const RoundOutputs& r) {
  write_binary_grid_csv(r.cia.grid, cfg.path("binary_grid.csv"));
  write_trajectory_csv(r.simulated, cfg.path("projected_trajectory.csv"));
  json rep;
  rep["eta"] = r.cia.bound.eta;
  rep["nodes_expanded"] = r.cia.nodes_expanded;
  rep["proven_optimal"] = r.cia.proven_optimal;
  rep["simulated_cost"] = r.simulated.total_cost;
  rep["min_uptime"] = cfg.min_uptime;
  rep["wall_time_s"] = r.wall_time;
  write_json(rep, cfg.path("round_report.json"));
  std::cout << "eta = " << r.cia.bound.eta << ", simulated cost = " << r.simulated.total_cost
            << "\n";
}

IstoResult run_isto_cfg(const RunConfig& cfg) {
  IstoOptions opts;
  opts.min_uptime = cfg.min_uptime;
  opts.nodes_per_stage = cfg.stage_nodes;
  return run_isto(cfg.spec(), double_tank_initial_sequence(), opts);
}

void print_isto_summary(const IstoResult& res) {
  for (const IterationRecord& rec : res.records) {
    std::cout << "iter=" << rec.iteration << " cost=" << rec.cost << " removed=[";
    for (size_t i = 0; i < rec.removed.size(); ++i)
      std::cout << (i ? "," : "") << rec.removed[i];
    std::cout << "] candidate=" << rec.candidate;
    if (rec.candidate >= 0)
      std::cout << " a=" << rec.a[rec.candidate] << " b=" << rec.b[rec.candidate];
    std::cout << "\n";
  }
}

void emit_isto(const RunConfig& cfg, const IstoResult& res, const std::string& suffix = "") {
  write_trajectory_csv(res.solution.trajectory, cfg.path("isto_trajectory" + suffix + ".csv"));
  write_sto_solution_json(res.solution, cfg.path("isto_solution" + suffix + ".json"));
  write_iteration_log_json(res.records, cfg.path("isto_iterations" + suffix + ".json"));
}

const char* kPlotScript = R"PY(#!/usr/bin/env python3
"""Plots the pipeline outputs written next to this script."""
import csv, os, sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_csv(name):
    path = os.path.join(os.path.dirname(os.path.abspath(__file__)), name)
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


def plot_traj(ax, data, label):
    ax.plot(data["t"], data["x2"], label=label)


fig, axes = plt.subplots(2, 2, figsize=(12, 8))
ref = None
for name, label, ax in [
    ("relaxed_trajectory.csv", "relaxed", axes[0][0]),
    ("projected_trajectory.csv", "projected", axes[0][1]),
    ("isto_trajectory_uptime.csv", "iSTO (uptime)", axes[1][0]),
    ("isto_trajectory_no_uptime.csv", "iSTO (no uptime)", axes[1][1]),
]:
    try:
        data = read_csv(name)
    except FileNotFoundError:
        continue
    import math
    r = [2 + 0.5 * math.sin(t) for t in data["t"]]
    ax.plot(data["t"], r, "k--", label="reference")
    plot_traj(ax, data, label)
    ax2 = ax.twinx()
    ax2.step(data["t"], data["u1"], where="post", alpha=0.4, label="u1")
    ax2.step(data["t"], data["u2"], where="post", alpha=0.4, label="u2")
    ax.set_title(label)
    ax.legend(loc="upper right")

fig.tight_layout()
out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "comparison.png")
fig.savefig(out, dpi=120)
print("wrote", out)
)PY";

int run_compare(RunConfig cfg) {
  const ProblemSpec spec = cfg.spec();

  RelaxOutputs relax = run_relax(cfg);
  emit_relax(cfg, relax);

  RunConfig round_cfg = cfg;
  if (round_cfg.min_uptime <= 0) round_cfg.min_uptime = 0.5;
  RoundOutputs round = run_round(round_cfg, relax.sol.relaxed_control_grid, &relax.sol);
  emit_round(round_cfg, round);

  RunConfig up_cfg = cfg;
  up_cfg.min_uptime = round_cfg.min_uptime;
  IstoResult isto_up = run_isto_cfg(up_cfg);
  emit_isto(cfg, isto_up, "_uptime");

  RunConfig free_cfg = cfg;
  free_cfg.min_uptime = 0.0;
  IstoResult isto_free = run_isto_cfg(free_cfg);
  emit_isto(cfg, isto_free, "_no_uptime");

  auto runtimes = [](const IstoResult& r) {
    std::vector<double> v;
    for (const auto& rec : r.records) v.push_back(rec.wall_time_s);
    return v;
  };

  json rep;
  rep["relaxed_cost"] = relax.sol.objective_value;
  rep["projected_cost"] = round.simulated.total_cost;
  rep["isto_uptime_cost"] = isto_up.solution.cost;
  rep["isto_no_uptime_cost"] = isto_free.solution.cost;
  rep["isto_uptime_iterations"] = isto_up.records.size();
  rep["isto_no_uptime_iterations"] = isto_free.records.size();
  rep["measured_runtimes_s"] = {
      {"relaxed_nlp", relax.wall_time},
      {"cia_bnb", round.wall_time},
      {"isto_uptime", runtimes(isto_up)},
      {"isto_no_uptime", runtimes(isto_free)},
  };
  // Runtimes reported alongside for context; never asserted (different
  // solver implementations are not comparable on wall clock).
  rep["reference_runtimes_s"] = {
      {"relaxed_nlp", 0.5},
      {"cia_bnb", 0.8},
      {"isto_uptime", {0.53, 0.20, 0.11, 0.10, 0.26, 0.12}},
      {"isto_no_uptime", {0.54, 0.13, 0.11}},
  };
  write_json(rep, cfg.path("compare_report.json"));

  std::ofstream plot(cfg.path("plot.py"));
  plot << kPlotScript;

  std::cout << "relaxed = " << relax.sol.objective_value
            << "\nprojected (uptime " << round_cfg.min_uptime << ") = "
            << round.simulated.total_cost
            << "\niSTO (uptime) = " << isto_up.solution.cost << " in "
            << isto_up.records.size() << " iterations"
            << "\niSTO (no uptime) = " << isto_free.solution.cost << " in "
            << isto_free.records.size() << " iterations\n";
  (void)spec;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Switched-system optimal control pipeline (Double Tank instance)"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string grid_file;
  double sim_c2 = -1.0;

  CLI::App* relax = app.add_subcommand("relax", "solve the relaxed problem");
  add_common(relax, cfg);
  CLI::App* round = app.add_subcommand("round", "project a relaxed grid to binary controls");
  add_common(round, cfg);
  round->add_option("--grid", grid_file, "relaxed control grid CSV (default: <out-dir>/relaxed_grid.csv)");
  CLI::App* isto = app.add_subcommand("isto", "iterative switching time optimization");
  add_common(isto, cfg);
  CLI::App* sim = app.add_subcommand("simulate", "simulate a binary control grid");
  add_common(sim, cfg);
  sim->add_option("--grid", grid_file, "binary control grid CSV");
  sim->add_option("--c2", sim_c2, "constant c2 flow (default: gamma/2)");
  CLI::App* compare = app.add_subcommand("compare", "full pipeline comparison");
  add_common(compare, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    cfg.finalize();
    if (relax->parsed()) {
      emit_relax(cfg, run_relax(cfg));
    } else if (round->parsed()) {
      const std::string path = grid_file.empty() ? cfg.path("relaxed_grid.csv") : grid_file;
      emit_round(cfg, run_round(cfg, load_control_grid_csv(path), nullptr));
    } else if (isto->parsed()) {
      IstoResult res = run_isto_cfg(cfg);
      print_isto_summary(res);
      const std::string suffix = cfg.min_uptime > 0 ? "_uptime" : "_no_uptime";
      emit_isto(cfg, res, suffix);
      std::cout << "final cost = " << res.solution.cost << "\n";
    } else if (sim->parsed()) {
      if (grid_file.empty()) throw std::invalid_argument("simulate: --grid is required");
      const ProblemSpec spec = cfg.spec();
      const BinaryGrid grid = load_binary_grid_csv(grid_file);
      ControlGrid controls;
      controls.times = grid.t_left;
      controls.times.push_back(grid.t_right.back());
      Vec c = 0.5 * (spec.continuous_lower + spec.continuous_upper);
      if (sim_c2 >= 0 && spec.continuous_input_dim >= 2) c[1] = sim_c2;
      for (int k = 0; k < grid.num_intervals(); ++k) {
        Vec u(grid.num_controls());
        for (int i = 0; i < grid.num_controls(); ++i) u[i] = grid.values[i][k];
        controls.discrete.push_back(u);
        controls.continuous.push_back(c);
      }
      const Trajectory traj = simulate(spec, controls, spec.x0);
      write_trajectory_csv(traj, cfg.path("simulated_trajectory.csv"));
      std::cout << "simulated cost = " << traj.total_cost << "\n";
    } else if (compare->parsed()) {
      return run_compare(cfg);
    }
  } catch (const InfeasibleProblem& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const ScheduleExhausted& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const SolverFailure& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kExitSolverFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
