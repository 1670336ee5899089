#include "switchopt/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <memory>

namespace switchopt {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max-iterations";
    case SolveStatus::line_search_failure: return "line-search-failure";
  }
  return "unknown";
}

namespace {

Vec clamp(const Vec& z, const Vec& lo, const Vec& hi) {
  return z.cwiseMax(lo).cwiseMin(hi);
}

struct AlState {
  const NlpProblem& p;
  Vec lambda;
  double mu;

  // Cached at the last evaluation point.
  double f_obj = 0.0;
  Vec residual;

  explicit AlState(const NlpProblem& p_) : p(p_) {}

  // Augmented Lagrangian value; fills grad when requested. Returns NaN on a
  // non-finite evaluation (the caller decides whether that is fatal).
  double eval(const Vec& z, Vec* grad) {
    Vec gobj;
    f_obj = p.objective(z, grad ? &gobj : nullptr);
    double val = f_obj;
    if (p.num_eq > 0) {
      residual.resize(p.num_eq);
      trips.clear();
      p.equality(z, residual, grad ? &trips : nullptr);
      if (!residual.allFinite()) return std::numeric_limits<double>::quiet_NaN();
      val += lambda.dot(residual) + 0.5 * mu * residual.squaredNorm();
      if (grad) {
        // grad = gobj + J^T (lambda + mu c), accumulated straight from the
        // triplets to avoid assembling a sparse matrix every evaluation.
        const Vec w = lambda + mu * residual;
        *grad = gobj;
        for (const auto& t : trips) (*grad)[t.col()] += t.value() * w[t.row()];
      }
    } else if (grad) {
      *grad = gobj;
    }
    if (grad && !grad->allFinite()) return std::numeric_limits<double>::quiet_NaN();
    return val;
  }

 private:
  std::vector<Triplet> trips;  // scratch, reused across evaluations
};

struct LogSink {
  std::ofstream out;
  explicit LogSink(const std::string& path) {
    if (!path.empty()) {
      out.open(path);
      out << "iter,objective,eq_residual,kkt_residual,step_norm\n";
    }
  }
  void row(long it, double f, double eq, double kkt, double step) {
    if (out.is_open()) out << it << ',' << f << ',' << eq << ',' << kkt << ',' << step << '\n';
  }
};

struct InnerResult {
  Vec z, grad;
  double f = 0.0;
  int iterations = 0;
  bool line_search_failed = false;
};

// Projected L-BFGS over the box with two-metric active-set handling: variables
// pressed against a bound by the gradient are dropped from the quasi-Newton
// metric and driven by steepest descent instead, so curvature pairs are not
// polluted by projection kinks. Terminates when the inf-norm of the projected
// gradient drops below tol.
InnerResult projected_lbfgs(AlState& al, Vec z, const Vec& lo, const Vec& hi, double tol,
                            int max_iter, int memory, long global_iter, LogSink& log,
                            double eq_for_log) {
  InnerResult res;
  z = clamp(z, lo, hi);
  const int n = static_cast<int>(z.size());
  Vec g(n);
  double f = al.eval(z, &g);
  if (!std::isfinite(f)) throw EvaluationError("non-finite evaluation at start of inner solve", z);

  std::deque<std::pair<Vec, Vec>> pairs;  // (s, y)
  for (int it = 0; it < max_iter; ++it) {
    const Vec pg = z - clamp(z - g, lo, hi);
    if (pg.lpNorm<Eigen::Infinity>() <= tol) break;

    // Epsilon-active set: near a bound with the gradient pushing outward.
    // Fixed variables (lower == upper) are always active.
    const double eps = std::min(1e-2, pg.norm());
    Vec gf = g;  // gradient restricted to the free variables
    for (int i = 0; i < n; ++i)
      if (hi[i] - lo[i] <= 0.0 || (z[i] - lo[i] <= eps && g[i] > 0.0) ||
          (hi[i] - z[i] <= eps && g[i] < 0.0))
        gf[i] = 0.0;

    // Two-loop recursion on the free gradient.
    Vec d = -gf;
    if (!pairs.empty()) {
      std::vector<double> alpha_c(pairs.size());
      for (int i = static_cast<int>(pairs.size()) - 1; i >= 0; --i) {
        const auto& [s, y] = pairs[i];
        alpha_c[i] = s.dot(d) / s.dot(y);
        d -= alpha_c[i] * y;
      }
      const auto& [s_last, y_last] = pairs.back();
      d *= s_last.dot(y_last) / y_last.squaredNorm();
      for (size_t i = 0; i < pairs.size(); ++i) {
        const auto& [s, y] = pairs[i];
        d += (alpha_c[i] - y.dot(d) / s.dot(y)) * s;
      }
      if (gf.dot(d) > -1e-12 * gf.norm() * d.norm()) {
        pairs.clear();
        d = -gf;
      }
    }
    // Active variables move along steepest descent; the projection clamps
    // those pushing outward back onto their bound.
    for (int i = 0; i < n; ++i)
      if (gf[i] == 0.0 && g[i] != 0.0) d[i] = -g[i];

    // Backtracking Armijo search along the projected path, with safeguarded
    // quadratic interpolation for the step length.
    const double gd = g.dot(d);
    double alpha = 1.0;
    bool accepted = false;
    Vec z_new, g_new;
    double f_new = 0.0;
    for (int ls = 0; ls < 60; ++ls) {
      z_new = clamp(z + alpha * d, lo, hi);
      const Vec step = z_new - z;
      if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = al.eval(z_new, nullptr);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * g.dot(step)) {
        accepted = true;
        break;
      }
      const double denom = 2.0 * (f_new - f - alpha * gd);
      const double alpha_q = std::isfinite(f_new) && denom > 0.0 ? -gd * alpha * alpha / denom
                                                                 : 0.5 * alpha;
      alpha = std::min(std::max(alpha_q, 0.1 * alpha), 0.5 * alpha);
    }
    if (!accepted) {
      if (!pairs.empty()) {  // retry from a steepest-descent restart
        pairs.clear();
        continue;
      }
      res.line_search_failed = true;
      break;
    }
    al.eval(z_new, &g_new);  // gradient at the accepted point
    const Vec s = z_new - z;
    const Vec y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      pairs.emplace_back(s, y);
      if (static_cast<int>(pairs.size()) > memory) pairs.pop_front();
    }
    log.row(global_iter + res.iterations, al.f_obj, eq_for_log,
            (z_new - clamp(z_new - g_new, lo, hi)).lpNorm<Eigen::Infinity>(), s.norm());
    z = std::move(z_new);
    f = f_new;
    g = std::move(g_new);
    ++res.iterations;
  }
  res.z = std::move(z);
  res.grad = std::move(g);
  res.f = f;
  return res;
}

// Colored finite-difference machinery for the Hessian of the augmented
// Lagrangian. Columns that share no Hessian row (distance-2 in the adjacency
// graph) are perturbed together, so one gradient evaluation recovers a whole
// group of columns (Curtis–Powell–Reid).
struct HessianEstimator {
  int n = 0;
  std::vector<std::vector<int>> col_rows;  // sorted structural rows per column
  std::vector<std::vector<int>> recover;   // rows each column's perturbation reads
  std::vector<std::vector<int>> groups;    // columns per color
  int num_colors = 0;

  HessianEstimator(int n_, const std::vector<std::pair<int, int>>& pattern) : n(n_) {
    col_rows.assign(n, {});
    for (auto [i, j] : pattern) {
      col_rows[j].push_back(i);
      if (i != j) col_rows[i].push_back(j);
    }
    for (int j = 0; j < n; ++j) {
      auto& rows = col_rows[j];
      rows.push_back(j);  // always keep the diagonal
      std::sort(rows.begin(), rows.end());
      rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    }

    // Symmetry lets each unordered pair be recovered from one side only. Give
    // high-degree ("dense") columns their own recovery of every incident pair;
    // the remaining sparse columns then only need pairs among themselves,
    // which keeps their conflict graph local and the color count small.
    double mean_degree = 0.0;
    for (int j = 0; j < n; ++j) mean_degree += static_cast<double>(col_rows[j].size());
    mean_degree /= std::max(1, n);
    const double dense_cut = std::max(32.0, 4.0 * mean_degree);
    std::vector<char> dense(n, 0);
    for (int j = 0; j < n; ++j) dense[j] = col_rows[j].size() > dense_cut;

    // Pair {i, j} is recovered by: the dense endpoint; the smaller index if
    // both are dense; the larger index if both are sparse.
    recover.assign(n, {});
    for (int j = 0; j < n; ++j)
      for (int r : col_rows[j]) {
        const bool mine = dense[j] ? (!dense[r] || r >= j) : (!dense[r] && r <= j);
        if (mine) recover[j].push_back(r);
      }

    // Greedy distance-2 coloring on the restricted recovery sets: columns j,k
    // clash when one's recovery rows meet the other's structural column.
    std::vector<std::vector<int>> reads_row(n);  // columns k with r in recover[k]
    for (int j = 0; j < n; ++j)
      for (int r : recover[j]) reads_row[r].push_back(j);
    std::vector<int> color_of(n, -1), forbidden(n + 1, -1);
    for (int j = 0; j < n; ++j) {
      for (int r : recover[j])
        for (int k : col_rows[r])  // columns structurally present in row r
          if (color_of[k] >= 0) forbidden[color_of[k]] = j;
      for (int r : col_rows[j])
        for (int k : reads_row[r])
          if (color_of[k] >= 0) forbidden[color_of[k]] = j;
      int c = 0;
      while (forbidden[c] == j) ++c;
      color_of[j] = c;
      num_colors = std::max(num_colors, c + 1);
    }
    groups.assign(num_colors, {});
    for (int j = 0; j < n; ++j) groups[color_of[j]].push_back(j);
  }

  // Forward-difference Hessian of the augmented Lagrangian at z, given its
  // gradient g0 there. Symmetric by construction (each pair read once and
  // mirrored).
  Eigen::SparseMatrix<double> estimate(AlState& al, const Vec& z, const Vec& g0) {
    std::vector<Triplet> trips;
    Vec zq = z, gq(n);
    for (const auto& group : groups) {
      for (int j : group) zq[j] += 1e-7 * (1.0 + std::abs(z[j]));
      al.eval(zq, &gq);
      if (gq.allFinite()) {
        for (int j : group) {
          const double delta = zq[j] - z[j];
          for (int r : recover[j]) {
            const double v = (gq[r] - g0[r]) / delta;
            trips.emplace_back(r, j, v);
            if (r != j) trips.emplace_back(j, r, v);
          }
        }
      }
      for (int j : group) zq[j] = z[j];
    }
    Eigen::SparseMatrix<double> H(n, n);
    H.setFromTriplets(trips.begin(), trips.end());
    return H;
  }
};

// Projected Newton over the box: Newton step on the free variables (colored
// finite-difference Hessian, sparse LDLT with an escalating ridge when the
// factorization fails or yields ascent), steepest descent on the
// epsilon-active ones, projected Armijo backtracking.
InnerResult projected_newton(AlState& al, HessianEstimator& hess, Vec z, const Vec& lo,
                             const Vec& hi, double tol, int max_iter, long global_iter,
                             LogSink& log, double eq_for_log) {
  InnerResult res;
  z = clamp(z, lo, hi);
  const int n = static_cast<int>(z.size());
  Vec g(n);
  double f = al.eval(z, &g);
  if (!std::isfinite(f)) throw EvaluationError("non-finite evaluation at start of inner solve", z);

  for (int it = 0; it < max_iter; ++it) {
    const Vec pg = z - clamp(z - g, lo, hi);
    if (pg.lpNorm<Eigen::Infinity>() <= tol) break;

    const double eps = std::min(1e-2, pg.norm());
    std::vector<int> free_idx;
    free_idx.reserve(n);
    for (int i = 0; i < n; ++i)
      if (hi[i] - lo[i] > 0.0 &&
          !((z[i] - lo[i] <= eps && g[i] > 0.0) || (hi[i] - z[i] <= eps && g[i] < 0.0)))
        free_idx.push_back(i);

    Vec d = Vec::Zero(n);
    for (int i = 0; i < n; ++i) d[i] = -g[i];  // active set: steepest descent
    const int nf = static_cast<int>(free_idx.size());
    if (nf > 0) {
      const Eigen::SparseMatrix<double> H = hess.estimate(al, z, g);
      std::vector<int> pos(n, -1);
      for (int k = 0; k < nf; ++k) pos[free_idx[k]] = k;
      std::vector<Triplet> sub;
      for (int k = 0; k < nf; ++k) {
        const int j = free_idx[k];
        for (Eigen::SparseMatrix<double>::InnerIterator itc(H, j); itc; ++itc)
          if (pos[itc.row()] >= 0) sub.emplace_back(pos[itc.row()], k, itc.value());
      }
      Vec gf(nf);
      for (int k = 0; k < nf; ++k) gf[k] = g[free_idx[k]];
      double diag_scale = 1.0;
      for (const auto& t : sub)
        if (t.row() == t.col()) diag_scale = std::max(diag_scale, std::abs(t.value()));
      Eigen::SparseMatrix<double> Hff(nf, nf);
      double tau = 0.0;
      bool have_dir = false;
      Vec df;
      for (int trial = 0; trial < 20 && !have_dir; ++trial) {
        std::vector<Triplet> reg = sub;
        if (tau > 0.0)
          for (int k = 0; k < nf; ++k) reg.emplace_back(k, k, tau);
        Hff.setFromTriplets(reg.begin(), reg.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Hff);
        if (ldlt.info() == Eigen::Success) {
          df = ldlt.solve(-gf);
          if (df.allFinite() && gf.dot(df) < -1e-12 * gf.norm() * df.norm()) have_dir = true;
        }
        if (!have_dir) tau = tau == 0.0 ? 1e-8 * diag_scale : tau * 10.0;
      }
      if (have_dir)
        for (int k = 0; k < nf; ++k) d[free_idx[k]] = df[k];
      else
        for (int k = 0; k < nf; ++k) d[free_idx[k]] = -gf[k];
    }

    // Projected Armijo backtracking from the full Newton step.
    const double gd = g.dot(d);
    double alpha = 1.0;
    bool accepted = false;
    Vec z_new, g_new;
    double f_new = 0.0;
    for (int ls = 0; ls < 60; ++ls) {
      z_new = clamp(z + alpha * d, lo, hi);
      const Vec step = z_new - z;
      if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = al.eval(z_new, nullptr);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * g.dot(step)) {
        accepted = true;
        break;
      }
      const double denom = 2.0 * (f_new - f - alpha * gd);
      const double alpha_q = std::isfinite(f_new) && denom > 0.0 ? -gd * alpha * alpha / denom
                                                                 : 0.5 * alpha;
      alpha = std::min(std::max(alpha_q, 0.1 * alpha), 0.5 * alpha);
    }
    if (!accepted) {
      res.line_search_failed = true;
      break;
    }
    al.eval(z_new, &g_new);
    log.row(global_iter + res.iterations, al.f_obj, eq_for_log,
            (z_new - clamp(z_new - g_new, lo, hi)).lpNorm<Eigen::Infinity>(),
            (z_new - z).norm());
    z = std::move(z_new);
    f = f_new;
    g = std::move(g_new);
    ++res.iterations;
  }
  res.z = std::move(z);
  res.grad = std::move(g);
  res.f = f;
  return res;
}

}  // namespace

NlpSolution solve(const NlpProblem& p, const SolveOptions& opts) {
  if (p.num_vars <= 0 || !p.objective) throw std::invalid_argument("solve: malformed problem");
  const Vec lo = p.lower.size() ? p.lower
                                : Vec::Constant(p.num_vars, -std::numeric_limits<double>::infinity());
  const Vec hi = p.upper.size() ? p.upper
                                : Vec::Constant(p.num_vars, std::numeric_limits<double>::infinity());

  LogSink log(opts.iteration_log_csv);
  AlState al(p);
  al.lambda = opts.lambda0.size() == p.num_eq && p.num_eq > 0 ? opts.lambda0 : Vec::Zero(p.num_eq);
  al.mu = opts.penalty_init;

  NlpSolution sol;
  sol.z = clamp(p.initial_guess, lo, hi);
  sol.status = SolveStatus::max_iterations;

  double omega = std::max(opts.tol_kkt, 1e-2);  // inner tolerance schedule
  double prev_cnorm = std::numeric_limits<double>::infinity();
  long total_inner = 0;

  std::unique_ptr<HessianEstimator> hess;
  if (!p.hessian_pattern.empty())
    hess = std::make_unique<HessianEstimator>(p.num_vars, p.hessian_pattern);

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    const int budget =
        static_cast<int>(std::min<long>(opts.max_inner, opts.max_total_inner - total_inner));
    if (budget <= 0) break;
    const double eq_for_log =
        prev_cnorm == std::numeric_limits<double>::infinity() ? 0.0 : prev_cnorm;
    InnerResult inner =
        hess ? projected_newton(al, *hess, sol.z, lo, hi, omega, budget, total_inner, log,
                                eq_for_log)
             : projected_lbfgs(al, sol.z, lo, hi, omega, budget, opts.lbfgs_memory, total_inner,
                               log, eq_for_log);
    total_inner += inner.iterations;
    sol.z = inner.z;

    double cnorm = 0.0;
    Vec lambda_hat = al.lambda;
    if (p.num_eq > 0) {
      cnorm = al.residual.lpNorm<Eigen::Infinity>();
      lambda_hat = al.lambda + al.mu * al.residual;
    }
    // KKT residual with the first-order multiplier estimate; this equals the
    // projected gradient of the augmented Lagrangian at the inner solution.
    sol.kkt_residual = (sol.z - clamp(sol.z - inner.grad, lo, hi)).lpNorm<Eigen::Infinity>();
    sol.eq_residual_norm = cnorm;
    sol.objective_value = al.f_obj;
    sol.eq_multipliers = lambda_hat;
    sol.iterations = static_cast<int>(total_inner);

    if (opts.verbose)
      fprintf(stderr,
              "outer %2d: f=%.8g cnorm=%.3e kkt=%.3e mu=%.1e omega=%.1e inner=%d total=%ld%s\n",
              outer, al.f_obj, cnorm, sol.kkt_residual, al.mu, omega, inner.iterations,
              total_inner, inner.line_search_failed ? " [ls-fail]" : "");
    if (cnorm <= opts.tol_eq && sol.kkt_residual <= opts.tol_kkt) {
      sol.status = SolveStatus::converged;
      break;
    }
    if (inner.line_search_failed && inner.iterations == 0 && al.mu >= opts.penalty_cap) {
      sol.status = SolveStatus::line_search_failure;
      break;
    }
    if (p.num_eq > 0) {
      // First-order multiplier update when feasibility improved enough;
      // otherwise raise the penalty. Never raise it once the equality
      // tolerance is met (only stationarity is outstanding then, and a larger
      // penalty just degrades the inner problem's conditioning).
      if (cnorm <= opts.tol_eq) {
        // Feasible but not yet stationary: absorb the multiplier estimate and
        // back the penalty off, which lowers the mu*c noise floor in the
        // augmented-Lagrangian gradient so stationarity can be polished.
        al.lambda = lambda_hat;
        prev_cnorm = cnorm;
        al.mu = std::max(al.mu / opts.penalty_growth, opts.penalty_init);
      } else if (cnorm <= std::max(10.0 * opts.tol_eq, 0.25 * prev_cnorm)) {
        al.lambda = lambda_hat;
        prev_cnorm = cnorm;
      } else {
        al.lambda = lambda_hat;  // still the best available estimate
        al.mu = std::min(al.mu * opts.penalty_growth, opts.penalty_cap);
      }
    }
    omega = std::max(opts.tol_kkt, 0.2 * omega);
  }

  // Recover bound multipliers from the projected Lagrangian gradient.
  Vec gobj(p.num_vars);
  p.objective(sol.z, &gobj);
  Vec g_lag = gobj;
  if (p.num_eq > 0) {
    Vec r(p.num_eq);
    std::vector<Triplet> trips;
    p.equality(sol.z, r, &trips);
    Eigen::SparseMatrix<double> J(p.num_eq, p.num_vars);
    J.setFromTriplets(trips.begin(), trips.end());
    g_lag += J.transpose() * sol.eq_multipliers;
  }
  sol.bound_multipliers = Vec::Zero(p.num_vars);
  for (int i = 0; i < p.num_vars; ++i) {
    if (sol.z[i] - lo[i] <= opts.tol_bound && g_lag[i] > 0.0)
      sol.bound_multipliers[i] = g_lag[i];
    else if (hi[i] - sol.z[i] <= opts.tol_bound && g_lag[i] < 0.0)
      sol.bound_multipliers[i] = -g_lag[i];
  }
  return sol;
}

DerivativeReport check_derivatives(const NlpProblem& p, const Vec& z) {
  DerivativeReport rep;
  const double flag_tol = 1e-4;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
  };

  Vec grad(p.num_vars);
  p.objective(z, &grad);
  Mat jac_analytic;
  if (p.num_eq > 0) {
    Vec r(p.num_eq);
    std::vector<Triplet> trips;
    p.equality(z, r, &trips);
    jac_analytic = Mat::Zero(p.num_eq, p.num_vars);
    for (const auto& t : trips) jac_analytic(t.row(), t.col()) += t.value();
  }

  Vec zp = z, zm = z;
  for (int j = 0; j < p.num_vars; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(z[j]));
    zp[j] = z[j] + h;
    zm[j] = z[j] - h;
    const double fd_grad = (p.objective(zp, nullptr) - p.objective(zm, nullptr)) / (2 * h);
    const double e = rel(grad[j], fd_grad);
    rep.max_rel_err_grad = std::max(rep.max_rel_err_grad, e);
    if (e > flag_tol) rep.flagged_grad.push_back(j);
    if (p.num_eq > 0) {
      Vec rp(p.num_eq), rm(p.num_eq);
      p.equality(zp, rp, nullptr);
      p.equality(zm, rm, nullptr);
      for (int i = 0; i < p.num_eq; ++i) {
        const double fd = (rp[i] - rm[i]) / (2 * h);
        const double ej = rel(jac_analytic(i, j), fd);
        rep.max_rel_err_jac = std::max(rep.max_rel_err_jac, ej);
        if (ej > flag_tol) rep.flagged_jac.emplace_back(i, j);
      }
    }
    zp[j] = z[j];
    zm[j] = z[j];
  }
  return rep;
}

}  // namespace switchopt
