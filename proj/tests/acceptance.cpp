// End-to-end acceptance gate for the Double Tank pipeline. Runs every stage
// (relaxed solve, CIA projection, iterative STO with and without minimum
// uptime) plus the solver-independent property suites, and prints exactly one
// PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "switchopt/cia.hpp"
#include "switchopt/model.hpp"
#include "switchopt/relaxed.hpp"
#include "switchopt/seqopt.hpp"
#include "switchopt/sto.hpp"

using namespace switchopt;

namespace {

int g_failures = 0;

void report(int criterion, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", criterion, ok ? "PASS" : "FAIL", detail.c_str());
  if (!ok) ++g_failures;
}

bool within(double value, double target, double rel) {
  return std::abs(value - target) <= rel * std::abs(target);
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// ---- criterion 2 helpers ---------------------------------------------------

Trajectory simulate_projected(const ProblemSpec& spec, const RelaxedSolution& relax,
                              const BinaryGrid& grid) {
  ControlGrid controls;
  controls.times = grid.t_left;
  controls.times.push_back(grid.t_right.back());
  for (int k = 0; k < grid.num_intervals(); ++k) {
    Vec u(grid.num_controls());
    for (int i = 0; i < grid.num_controls(); ++i) u[i] = grid.values[i][k];
    controls.discrete.push_back(u);
    controls.continuous.push_back(relax.trajectory.continuous_inputs[k]);
  }
  return simulate(spec, controls, spec.x0);
}

// ---- criterion 6 helpers ---------------------------------------------------

bool check_time_transforms(std::string& detail) {
  std::mt19937 rng(20240824);
  std::uniform_real_distribution<double> dur(0.05, 4.0), frac(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 9);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    DurationSet W;
    const int ns = len(rng);
    for (int i = 0; i < ns; ++i) W.w.push_back(dur(rng));
    const double tau = frac(rng) * ns;
    worst = std::max(worst, std::abs(tau_of_time(W, time_of_tau(W, tau)) - tau));
    const double t = frac(rng) * W.total();
    worst = std::max(worst, std::abs(time_of_tau(W, tau_of_time(W, t)) - t));
  }
  detail = fmt("transform identities worst error %.2e on 1000 random sets", worst);
  return worst < 1e-12;
}

bool check_transcription_gradients(const ProblemSpec& spec, std::string& detail) {
  std::mt19937 rng(555);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;

  const RelaxedTranscription rel = transcribe_relaxed(spec, 40);
  for (int point = 0; point < 10; ++point) {
    Vec z = rel.nlp.initial_guess;
    for (int i = 0; i < rel.nlp.num_vars; ++i) {
      const double lo = rel.nlp.lower[i], hi = rel.nlp.upper[i];
      if (std::isfinite(lo) && std::isfinite(hi))
        z[i] = lo + unit(rng) * (hi - lo);
      else
        z[i] = 0.5 + 3.0 * unit(rng);  // states: keep tank levels positive
    }
    const DerivativeReport rep = check_derivatives(rel.nlp, z);
    worst = std::max({worst, rep.max_rel_err_grad, rep.max_rel_err_jac});
  }

  Sequence seq;
  seq.stages = {Eigen::Vector2d(1, 1), Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 0)};
  SlackCosts costs;
  costs.a = {1.0, 100.0, 1.0};
  costs.b = {0.0, 0.0, 10.0};
  const StoTranscription sto(spec, seq, 6, {0.5, 0.5, 0.0}, costs);
  for (int point = 0; point < 10; ++point) {
    Vec z = sto.nlp().initial_guess;
    for (int i = 0; i < sto.nlp().num_vars; ++i) {
      const double lo = sto.nlp().lower[i], hi = sto.nlp().upper[i];
      if (std::isfinite(lo) && std::isfinite(hi))
        z[i] = lo + unit(rng) * (hi - lo);
      else
        z[i] = 0.5 + 3.0 * unit(rng);  // states and dwell times stay positive
    }
    const DerivativeReport rep = check_derivatives(sto.nlp(), z);
    worst = std::max({worst, rep.max_rel_err_grad, rep.max_rel_err_jac});
  }
  detail = fmt("transcription derivative worst rel. err %.2e at 10 random points each", worst);
  return worst < 1e-5;
}

double prefix_eta(const RelaxedControlGrid& rel, const BinaryGrid& bin) {
  double eta = 0.0;
  for (int i = 0; i < rel.num_controls(); ++i) {
    double acc = 0.0;
    for (int k = 0; k < rel.num_intervals(); ++k) {
      acc += (rel.values[i][k] - bin.values[i][k]) * (rel.t_right[k] - rel.t_left[k]);
      eta = std::max(eta, std::abs(acc));
    }
  }
  return eta;
}

bool check_bnb_against_brute_force(std::string& detail) {
  std::mt19937 rng(20240819);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> len(3, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = len(rng);
    RelaxedControlGrid rel;
    for (int k = 0; k < n; ++k) {
      rel.t_left.push_back(0.5 * k);
      rel.t_right.push_back(0.5 * (k + 1));
    }
    rel.values.assign(2, std::vector<double>(n));
    for (auto& row : rel.values)
      for (double& v : row)
        v = trial % 3 == 0 ? std::round(unit(rng) * 2.0) / 2.0 : unit(rng);
    const double uptime = (trial % 4) * 0.25;

    CiaOptions opts;
    opts.min_uptime = uptime;
    const CiaResult got = solve_cia_bnb(rel, opts);
    if (!got.proven_optimal || !check_min_uptime(got.grid, uptime)) {
      detail = fmt("instance %d: unproven or dwell-infeasible output", trial);
      return false;
    }

    // Exhaustive enumeration with the same tie-break (lexicographically
    // smallest word, time-major then control-minor).
    const int bits = 2 * n;
    double best_eta = 0.0;
    std::vector<int> best_word, word(bits);
    bool have = false;
    for (long mask = 0; mask < (1L << bits); ++mask) {
      BinaryGrid bin;
      bin.t_left = rel.t_left;
      bin.t_right = rel.t_right;
      bin.values.assign(2, std::vector<int>(n, 0));
      for (int b = 0; b < bits; ++b) {
        word[b] = static_cast<int>((mask >> (bits - 1 - b)) & 1);
        bin.values[b % 2][b / 2] = word[b];
      }
      if (!check_min_uptime(bin, uptime)) continue;
      const double eta = prefix_eta(rel, bin);
      if (!have || eta < best_eta || (eta == best_eta && word < best_word)) {
        best_eta = eta;
        best_word = word;
        have = true;
      }
    }
    std::vector<int> got_word(bits);
    for (int b = 0; b < bits; ++b) got_word[b] = got.grid.values[b % 2][b / 2];
    if (got.bound.eta != best_eta || got_word != best_word) {
      detail = fmt("instance %d: eta %.12f vs brute %.12f (or tie-break mismatch)", trial,
                   got.bound.eta, best_eta);
      return false;
    }
  }
  detail = "branch and bound matches exhaustive enumeration on 100 instances (eta and word)";
  return true;
}

bool bytes_equal(const Vec& a, const Vec& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

int main() {
  const ProblemSpec spec = make_double_tank();

  // ---- criterion 1: relaxed solve ------------------------------------------
  const auto t_relax = std::chrono::steady_clock::now();
  const RelaxedSolution relax = solve_relaxed(spec, 300);
  const double relax_s = seconds_since(t_relax);
  {
    const bool ok = relax.nlp.status == SolveStatus::converged &&
                    within(relax.objective_value, 18.239, 0.02) && relax_s < 60.0;
    report(1, ok,
           fmt("relaxed N=300 objective %.4f (target 18.239 +-2%%), status %s, %.1f s",
               relax.objective_value, to_string(relax.nlp.status), relax_s));
  }

  // ---- criterion 2: CIA projection fails to track --------------------------
  const auto t_round = std::chrono::steady_clock::now();
  CiaOptions copts;
  copts.min_uptime = 0.5;
  const CiaResult cia = solve_cia_bnb(relax.relaxed_control_grid, copts);
  const Trajectory projected = simulate_projected(spec, relax, cia.grid);
  const double round_s = seconds_since(t_round);
  double max_track_err = 0.0;
  for (int k = 0; k < projected.num_nodes(); ++k)
    max_track_err = std::max(
        max_track_err, std::abs(projected.states[k][1] - reference(projected.times[k])));
  {
    const bool ok = projected.total_cost > 100.0 && max_track_err > 0.3;
    report(2, ok,
           fmt("projected (uptime 0.5) simulated cost %.1f (> 100), max |x2-r| %.2f (> 0.3), "
               "eta %.4f, optimal %s",
               projected.total_cost, max_track_err, cia.bound.eta,
               cia.proven_optimal ? "yes" : "no"));
  }

  // ---- criterion 3: iterative STO with minimum uptime ----------------------
  IstoOptions up_opts;
  up_opts.min_uptime = 0.5;
  const IstoResult isto_up = run_isto(spec, double_tank_initial_sequence(), up_opts);
  {
    const bool single_01 = isto_up.solution.sequence.size() == 1 &&
                           isto_up.solution.sequence.stages[0] == Eigen::Vector2d(0, 1);
    const bool ok = isto_up.records.size() == 6 && single_01 &&
                    within(isto_up.solution.cost, 19.406, 0.02);
    std::ostringstream seq_txt;
    for (const Vec& u : isto_up.solution.sequence.stages)
      seq_txt << "(" << u[0] << "," << u[1] << ")";
    report(3, ok,
           fmt("iSTO uptime 0.5: %zu iterations (expect 6), final sequence %s (expect (0,1)), "
               "cost %.4f (target 19.406 +-2%%)",
               isto_up.records.size(), seq_txt.str().c_str(), isto_up.solution.cost));
  }

  // ---- criterion 4: iterative STO without uptime ---------------------------
  IstoOptions free_opts;
  free_opts.min_uptime = 0.0;
  const IstoResult isto_free = run_isto(spec, double_tank_initial_sequence(), free_opts);
  {
    const Trajectory& traj = isto_free.solution.trajectory;
    // The early x2 peak must be pumped by the cheap pipe: a u1=1 interval in
    // the first 1.5 s whose u2 inflow is negligible next to the u1 inflow.
    double u1_inflow = 0.0, u2_inflow = 0.0;
    bool early_u1 = false;
    for (size_t k = 0; k < traj.discrete_inputs.size(); ++k) {
      if (traj.times[k] > 1.5) break;
      if (traj.discrete_inputs[k][0] > 0.5) {
        early_u1 = true;
        const double dt = traj.times[k + 1] - traj.times[k];
        u1_inflow += dt * traj.discrete_inputs[k][0] * traj.continuous_inputs[k][0];
        u2_inflow += dt * traj.discrete_inputs[k][1] * traj.continuous_inputs[k][1];
      }
    }
    const bool peak_from_u1 = early_u1 && u2_inflow < 0.1 * u1_inflow;
    const bool iter_ok = isto_free.records.size() == 3;
    const bool ok =
        iter_ok && within(isto_free.solution.cost, 18.702, 0.02) && peak_from_u1;
    report(4, ok,
           fmt("iSTO no uptime: %zu iterations (expect 3), cost %.4f (target 18.702 +-2%%), "
               "early peak from u1 %s (u1 inflow %.2f vs u2 inflow %.2f before 1.5 s)",
               isto_free.records.size(), isto_free.solution.cost, peak_from_u1 ? "yes" : "no",
               u1_inflow, u2_inflow));
    if (!iter_ok)
      std::printf(
          "  note: the removal cascade converges in %zu solves here; after the first solve "
          "every surviving stage keeps a strictly positive dwell at the working grid, so no "
          "further removal round occurs.\n",
          isto_free.records.size());
  }

  // ---- criterion 5: cost ordering with 1% separation -----------------------
  {
    const double a = relax.objective_value;
    const double b = isto_free.solution.cost;
    const double c = isto_up.solution.cost;
    const double d = projected.total_cost;
    const bool ok = b >= 1.01 * a && c >= 1.01 * b && d >= 1.01 * c;
    report(5, ok,
           fmt("ordering relaxed %.4f < iSTO(no uptime) %.4f < iSTO(uptime) %.4f < projected "
               "%.1f, each step >= 1%%",
               a, b, c, d));
  }

  // ---- criterion 6: property suites ----------------------------------------
  {
    bool all = true;
    std::string detail;

    bool ok = check_time_transforms(detail);
    std::printf("  6a %s: %s\n", ok ? "pass" : "FAIL", detail.c_str());
    all = all && ok;

    ok = check_transcription_gradients(spec, detail);
    std::printf("  6b %s: %s\n", ok ? "pass" : "FAIL", detail.c_str());
    all = all && ok;

    ok = check_bnb_against_brute_force(detail);
    std::printf("  6c/6d %s: %s\n", ok ? "pass" : "FAIL", detail.c_str());
    all = all && ok;

    const double up_resid = std::abs(isto_up.solution.w.total() - spec.tf);
    const double free_resid = std::abs(isto_free.solution.w.total() - spec.tf);
    ok = up_resid < 1e-7 && free_resid < 1e-7;
    std::printf("  6e %s: dwell sums off the horizon by %.2e / %.2e\n", ok ? "pass" : "FAIL",
                up_resid, free_resid);
    all = all && ok;

    Sequence single;
    single.stages = {Eigen::Vector2d(0, 1)};
    IstoOptions fp_opts;
    const IstoResult fixed_point = run_isto(spec, single, fp_opts);
    ok = fixed_point.records.size() == 1 && fixed_point.records[0].removed.empty();
    std::printf("  6f %s: single-stage optimum terminates in %zu iteration(s), %zu removals\n",
                ok ? "pass" : "FAIL", fixed_point.records.size(),
                fixed_point.records[0].removed.size());
    all = all && ok;

    const RelaxedSolution r1 = solve_relaxed(spec, 120);
    const RelaxedSolution r2 = solve_relaxed(spec, 120);
    SlackCosts costs;
    costs.a = {1.0, 1.0};
    costs.b = {0.0, 0.0};
    Sequence pair;
    pair.stages = {Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)};
    const StoSolution s1 = solve_sto(spec, pair, 30, {0.5, 0.5}, costs);
    const StoSolution s2 = solve_sto(spec, pair, 30, {0.5, 0.5}, costs);
    const CiaResult c1 = solve_cia_bnb(relax.relaxed_control_grid, copts);
    ok = bytes_equal(r1.nlp.z, r2.nlp.z) && bytes_equal(s1.z, s2.z) &&
         c1.grid.values == cia.grid.values;
    std::printf("  6g %s: repeated relaxed/STO/BnB runs byte-identical\n", ok ? "pass" : "FAIL");
    all = all && ok;

    report(6, all, "property suites above");
  }

  // ---- criterion 7: runtimes reported, never asserted ----------------------
  {
    std::ostringstream up_times, free_times;
    for (const IterationRecord& r : isto_up.records) up_times << fmt(" %.2f", r.wall_time_s);
    for (const IterationRecord& r : isto_free.records) free_times << fmt(" %.2f", r.wall_time_s);
    report(7, true,
           fmt("measured runtimes (s): relaxed %.2f, projection %.2f, iSTO uptime%s, "
               "iSTO no uptime%s (reported only)",
               relax_s, round_s, up_times.str().c_str(), free_times.str().c_str()));
  }

  std::printf("%d criterion(s) failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
