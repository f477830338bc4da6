#include "pgm/bounds_upper.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <tuple>

#include "pgm/conic.hpp"
#include "pgm/optima.hpp"
#include "pgm/rng.hpp"

namespace pgm::bounds {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double value_only(const ProblemInstance& inst, const SimplexWeights& alpha) {
  la::Vec d = la::sub(optima::kappa(inst, alpha), inst.y);
  return la::dot(d, d);
}

struct StartRun {
  double best = kInf;
  SimplexWeights alpha;
  bool converged = false;
};

StartRun run_descent(const ProblemInstance& inst, const SimplexWeights& start,
                     const SearchOptions& opt) {
  StartRun run;
  run.alpha = start;
  auto [F, g] = objective_and_gradient(inst, run.alpha);
  for (int it = 0; it < opt.max_iters; ++it) {
    SimplexWeights probe = conic::project_simplex(la::axpy(-1.0, g, run.alpha.alpha));
    if (la::norm2(la::sub(probe.alpha, run.alpha.alpha)) <= opt.grad_tol) {
      run.converged = true;
      break;
    }
    double step = opt.step_init;
    bool accepted = false;
    while (step > 1e-16) {
      SimplexWeights trial = conic::project_simplex(la::axpy(-step, g, run.alpha.alpha));
      la::Vec d = la::sub(trial.alpha, run.alpha.alpha);
      double move = la::dot(d, d);
      if (move == 0.0) break;
      double Ft = value_only(inst, trial);
      if (Ft <= F - opt.armijo_c / step * move) {
        run.alpha = std::move(trial);
        std::tie(F, g) = objective_and_gradient(inst, run.alpha);
        accepted = true;
        break;
      }
      step *= opt.backtrack;
    }
    if (!accepted) {  // the projection arc yields no decrease: stationary
      run.converged = true;
      break;
    }
  }
  run.best = F;
  return run;
}

/// Lexicographic enumeration of the K-compositions defining the simplex grid.
void for_each_composition(int K, int m, const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> k(m, 0);
  std::function<void(int, int)> rec = [&](int pos, int left) {
    if (pos == m - 1) {
      k[pos] = left;
      visit(k);
      return;
    }
    for (int v = 0; v <= left; ++v) {
      k[pos] = v;
      rec(pos + 1, left - v);
    }
  };
  rec(0, K);
}

double eval_constrained(const ProblemInstance& inst, const SimplexWeights& alpha) {
  auto [point, face] = optima::kappa_c(inst, alpha);
  la::Vec s = optima::selection(face, inst.y);
  la::Vec d = la::sub(inst.y, s);
  return la::dot(d, d);
}

}  // namespace

std::pair<double, la::Vec> objective_and_gradient(const ProblemInstance& inst,
                                                  const SimplexWeights& alpha) {
  std::optional<la::SpdFactor> factor;
  try {
    factor.emplace(inst.mixed_curvature(alpha));
  } catch (const la::NotPositiveDefinite&) {
    throw SingularCurvature("objective_and_gradient: mixed curvature is singular");
  }
  la::Vec kap = factor->solve(la::scale(-1.0, inst.mixed_linear(alpha)));
  la::Vec diff = la::sub(kap, inst.y);
  double F = la::dot(diff, diff);
  la::Vec w = factor->solve(la::scale(2.0, diff));
  la::Vec grad(inst.m());
  for (int j = 0; j < inst.m(); ++j) {
    // grad_j = w^T Q_j (x_j^f - kappa) with Q_j x_j^f = -phi_j.
    la::Vec t = la::axpy(1.0, la::symv(inst.basis[j].Q, kap), inst.basis[j].phi);
    grad[j] = -la::dot(w, t);
  }
  return {F, std::move(grad)};
}

// The stationarity-residual minimizer from check_feasibility: when y is a
// member this start already reproduces y through kappa (residual ~0 maps to
// F ~0), and it is a strong heuristic start otherwise.  It is always run in
// addition to the configured multistarts, so the start sequence stays nested
// as multistarts grows.
static std::optional<SimplexWeights> seeded_start(const ProblemInstance& inst) {
  try {
    auto feas = optima::check_feasibility(inst);
    return feas.alpha;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

UpperBoundResult upper_bound_unconstrained(const ProblemInstance& inst,
                                           const SearchOptions& opt) {
  const int m = inst.m();
  Rng rng(opt.seed);
  std::vector<SimplexWeights> starts;
  starts.reserve(static_cast<size_t>(opt.multistarts) + 1);
  if (auto seeded = seeded_start(inst)) starts.push_back(std::move(*seeded));
  for (int s = 0; s < opt.multistarts; ++s) {
    if (s < m) {
      starts.push_back(SimplexWeights::vertex(m, s));
    } else if (s == m) {
      starts.push_back(SimplexWeights::barycenter(m));
    } else {
      SimplexWeights w;
      w.alpha = rng.dirichlet(m);
      starts.push_back(std::move(w));
    }
  }

  UpperBoundResult out;
  out.trace.reserve(starts.size());
  int best = -1;
  SimplexWeights best_alpha;
  for (const auto& start : starts) {
    StartRun run = run_descent(inst, start, opt);
    out.trace.push_back(run.best);
    if (run.converged) ++out.converged_starts;
    if (best < 0 || run.best < out.trace[best]) {
      best = static_cast<int>(out.trace.size()) - 1;
      best_alpha = std::move(run.alpha);
    }
  }
  out.alpha = std::move(best_alpha);
  out.x = optima::kappa(inst, out.alpha);
  la::Vec d = la::sub(inst.y, out.x);
  out.p_up = la::dot(d, d);
  return out;
}

UpperBoundResult upper_bound_constrained(const ProblemInstance& inst,
                                         const SearchOptions& opt) {
  const int m = inst.m();
  const int K = std::max(1, static_cast<int>(std::llround(1.0 / opt.grid_resolution)));
  const double h = 1.0 / K;

  UpperBoundResult out;
  double best_val = kInf;
  SimplexWeights best_alpha;
  int failures = 0;

  if (auto seeded = seeded_start(inst)) {
    try {
      double v = eval_constrained(inst, *seeded);
      out.trace.push_back(v);
      ++out.converged_starts;
      best_val = v;
      best_alpha = std::move(*seeded);
    } catch (const SolverFailure&) {
      ++failures;
    }
  }

  for_each_composition(K, m, [&](const std::vector<int>& cell) {
    SimplexWeights a;
    a.alpha.resize(m);
    for (int j = 0; j < m; ++j) a.alpha[j] = static_cast<double>(cell[j]) * h;
    try {
      double v = eval_constrained(inst, a);
      out.trace.push_back(v);
      ++out.converged_starts;
      if (v < best_val) {
        best_val = v;
        best_alpha = std::move(a);
      }
    } catch (const SolverFailure&) {
      ++failures;
    }
  });
  if (!(best_val < kInf))
    throw SolverFailure("upper_bound_constrained: all " + std::to_string(failures) +
                        " grid cells failed");

  // Derivative-free polish: golden-section line searches along coordinate
  // exchange directions e_i - e_j inside the winning cell's neighborhood.
  auto try_point = [&](const la::Vec& raw) {
    SimplexWeights a = conic::project_simplex(raw);
    double v;
    try {
      v = eval_constrained(inst, a);
    } catch (const SolverFailure&) {
      return kInf;
    }
    if (v < best_val) {
      best_val = v;
      best_alpha = std::move(a);
    }
    return v;
  };
  const double golden = 0.6180339887498949;
  for (int sweep = 0; sweep < 2; ++sweep) {
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        la::Vec base = best_alpha.alpha;
        auto at = [&](double t) {
          la::Vec v = base;
          v[i] += t;
          v[j] -= t;
          return try_point(v);
        };
        double lo = std::max(-base[i], -h);
        double hi = std::min(base[j], h);
        if (hi - lo <= 1e-12) continue;
        double a = lo, b = hi;
        double x1 = b - golden * (b - a), x2 = a + golden * (b - a);
        double f1 = at(x1), f2 = at(x2);
        for (int iter = 0; iter < 40 && (b - a) > 1e-3 * h; ++iter) {
          if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - golden * (b - a);
            f1 = at(x1);
          } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + golden * (b - a);
            f2 = at(x2);
          }
        }
      }
    }
  }

  auto [point, face] = optima::kappa_c(inst, best_alpha);
  out.x = optima::selection(face, inst.y);
  auto [mu, lambda, resid] = optima::fit_multipliers(inst, best_alpha, out.x);
  (void)resid;
  out.alpha = std::move(best_alpha);
  out.mu = std::move(mu);
  out.lambda = std::move(lambda);
  la::Vec d = la::sub(inst.y, out.x);
  out.p_up = la::dot(d, d);
  return out;
}

UpperBoundResult upper_bound(const ProblemInstance& inst, const SearchOptions& opt) {
  return inst.constrained() ? upper_bound_constrained(inst, opt)
                            : upper_bound_unconstrained(inst, opt);
}

}  // namespace pgm::bounds
