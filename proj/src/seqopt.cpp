#include "switchopt/seqopt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace switchopt {

std::pair<double, double> CostSchedule::row(int k) const {
  if (k < 0 || k > max_repetition())
    throw ScheduleExhausted("cost schedule exhausted at repetition " + std::to_string(k), -1);
  const double mag = std::min(std::pow(10.0, k), magnitude_cap);
  return k % 2 == 0 ? std::make_pair(mag, 0.0) : std::make_pair(0.0, mag);
}

std::optional<int> select_candidate(const std::vector<double>& slacks, double eps_e) {
  int best = -1;
  double best_e = eps_e;
  for (size_t i = 0; i < slacks.size(); ++i)
    if (slacks[i] > best_e) {  // strict: ties go to the lowest index
      best_e = slacks[i];
      best = static_cast<int>(i);
    }
  if (best < 0) return std::nullopt;
  return best;
}

std::pair<Sequence, std::vector<int>> remove_zero_stages(const DurationSet& w,
                                                         const Sequence& seq, double eps_w) {
  if (w.size() != seq.size())
    throw std::invalid_argument("remove_zero_stages: size mismatch");
  Sequence out;
  std::vector<int> removed;
  for (int i = 0; i < seq.size(); ++i) {
    if (w.w[i] < eps_w)
      removed.push_back(i);
    else
      out.stages.push_back(seq.stages[i]);
  }
  if (out.stages.empty())
    throw std::runtime_error("remove_zero_stages: all dwell times below tolerance");
  return {out, removed};
}

Sequence double_tank_initial_sequence() {
  std::vector<Vec> order = {Eigen::Vector2d(1, 1), Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 0),
                            Eigen::Vector2d(0, 0)};
  return enumerate_initial_sequence(order, 7);
}

Sequence enumerate_initial_sequence(const std::vector<Vec>& value_set, int length,
                                    const SequenceFilter* filter) {
  if (length < 1) throw std::invalid_argument("enumerate_initial_sequence: length < 1");
  if (value_set.empty()) throw std::invalid_argument("enumerate_initial_sequence: empty value set");
  Sequence seq;
  size_t cursor = 0, rejected_in_a_row = 0;
  while (seq.size() < length) {
    Sequence candidate = seq;
    candidate.stages.push_back(value_set[cursor % value_set.size()]);
    ++cursor;
    if (!filter || filter->accept(candidate)) {
      seq = std::move(candidate);
      rejected_in_a_row = 0;
    } else if (++rejected_in_a_row >= value_set.size()) {
      throw std::runtime_error("enumerate_initial_sequence: filter rejects every extension");
    }
  }
  return seq;
}

namespace {

std::vector<double> uptime_bounds(const Sequence& seq, double min_uptime) {
  std::vector<double> lb(seq.size(), 0.0);
  for (int i = 0; i < seq.size(); ++i)
    if (seq.stages[i].lpNorm<Eigen::Infinity>() > 0.0) lb[i] = min_uptime;
  return lb;
}

}  // namespace

IstoResult run_isto(const ProblemSpec& spec, const Sequence& initial, const IstoOptions& opts,
                    const SequenceFilter* filter) {
  if (initial.size() < 1) throw std::invalid_argument("run_isto: empty initial sequence");
  if (filter && !filter->accept(initial))
    throw std::invalid_argument("run_isto: initial sequence rejected by filter");

  const int ns0 = initial.size();
  const int solve_cap = 10 * ns0;

  Sequence seq = initial;
  std::vector<int> rep(ns0, 0);
  IstoResult result;
  StoSolution prev;
  bool have_prev = false;
  std::vector<int> kept_map;  // new stage -> prev stage index
  int solves = 0;

  auto make_costs = [&]() {
    SlackCosts c;
    for (int r : rep) {
      auto [a, b] = opts.schedule.row(r);
      c.a.push_back(a);
      c.b.push_back(b);
    }
    return c;
  };

  auto do_solve = [&](const SlackCosts& costs, const StoWarmStart& warm) {
    if (solves >= solve_cap)
      throw std::runtime_error("run_isto: iteration safeguard cap (" +
                               std::to_string(solve_cap) + " STO solves) reached");
    const auto t0 = std::chrono::steady_clock::now();
    // Keep the total node budget roughly constant as the sequence shrinks, so
    // later solves retain the discretization scale of the relaxed problem.
    const int m = opts.nodes_per_stage > 0
                      ? opts.nodes_per_stage
                      : std::max(20, static_cast<int>(std::lround(300.0 / seq.size())));
    StoSolution sol =
        solve_sto(spec, seq, m, uptime_bounds(seq, opts.min_uptime), costs, opts.nlp, warm);
    ++solves;
    IterationRecord rec;
    rec.iteration = solves;
    rec.sequence_before = seq;
    rec.sequence_after = seq;
    rec.a = costs.a;
    rec.b = costs.b;
    rec.repetition = rep;
    rec.w = sol.w.w;
    rec.e = sol.slacks;
    rec.cost = sol.cost;
    rec.solver_iterations = sol.nlp.iterations;
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.records.push_back(std::move(rec));
    return sol;
  };

  while (true) {
    SlackCosts costs = make_costs();
    StoWarmStart warm;
    if (have_prev) {
      warm.prior = &prev;
      warm.kept = kept_map;
    }
    StoSolution sol = do_solve(costs, warm);

    // Zero-duration stages are inert: drop them from the sequence right away
    // (the restriction of the current solution to the survivors remains
    // optimal) and evaluate termination/candidates on the survivors only.
    auto [new_seq, removed] = remove_zero_stages(sol.w, seq, opts.eps_w);
    result.records.back().removed = removed;
    result.records.back().sequence_after = new_seq;

    kept_map.clear();
    std::vector<int> new_rep;
    std::vector<double> surv_e;
    for (int i = 0; i < seq.size(); ++i)
      if (std::find(removed.begin(), removed.end(), i) == removed.end()) {
        kept_map.push_back(i);
        new_rep.push_back(rep[i]);
        surv_e.push_back(sol.slacks[i]);
      }
    rep = std::move(new_rep);
    seq = std::move(new_seq);

    const std::optional<int> cand = select_candidate(surv_e, opts.eps_e);
    if (!cand) {
      if (removed.empty()) {
        result.solution = std::move(sol);
        return result;
      }
      // Stages were dropped: re-solve the reduced sequence so the returned
      // solution matches it before re-checking termination.
      prev = std::move(sol);
      have_prev = true;
      continue;
    }
    const int r = *cand;
    result.records.back().candidate = kept_map[r];
    if (++rep[r] > opts.schedule.max_repetition())
      throw InfeasibleProblem("run_isto: stage " + std::to_string(kept_map[r]) +
                              " exhausted the cost schedule; problem deemed infeasible");
    prev = std::move(sol);
    have_prev = true;
  }
}

void write_iteration_log_json(const std::vector<IterationRecord>& records,
                              const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const IterationRecord& r : records) {
    nlohmann::json j;
    j["iteration"] = r.iteration;
    auto seq_json = [](const Sequence& s) {
      nlohmann::json out = nlohmann::json::array();
      for (const Vec& u : s.stages) out.push_back(std::vector<double>(u.data(), u.data() + u.size()));
      return out;
    };
    j["sequence_before"] = seq_json(r.sequence_before);
    j["sequence_after"] = seq_json(r.sequence_after);
    j["a"] = r.a;
    j["b"] = r.b;
    j["repetition"] = r.repetition;
    j["w"] = r.w;
    j["e"] = r.e;
    j["removed"] = r.removed;
    j["candidate"] = r.candidate;
    j["cost"] = r.cost;
    j["solver_iterations"] = r.solver_iterations;
    j["wall_time_s"] = r.wall_time_s;
    arr.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << arr.dump(2) << '\n';
}

}  // namespace switchopt
