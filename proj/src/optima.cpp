#include "pgm/optima.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pgm/conic.hpp"
#include "pgm/rng.hpp"

namespace pgm::optima {

namespace {

const char* status_name(conic::SolveStatus s) {
  switch (s) {
    case conic::SolveStatus::Optimal: return "optimal";
    case conic::SolveStatus::Infeasible: return "infeasible";
    default: return "iteration limit";
  }
}

void require_optimal(const conic::ConicSolution& sol, const std::string& where) {
  if (sol.status != conic::SolveStatus::Optimal)
    throw SolverFailure(where + ": conic solve ended with status " +
                        status_name(sol.status));
}

void append_polytope_rows(conic::ConicProgram& prog, const Polytope& X, int x_offset) {
  const int n = X.A_eq.rows > 0 ? X.A_eq.cols : (X.A.rows > 0 ? X.A.cols : 0);
  for (int row = 0; row < X.q(); ++row) {
    conic::Constraint c;
    for (int i = 0; i < n; ++i) c.f.add(x_offset + i, X.A_eq(row, i));
    c.rhs = X.b_eq[row];
    prog.equalities.push_back(std::move(c));
  }
  for (int row = 0; row < X.r(); ++row) {
    conic::Constraint c;
    for (int i = 0; i < n; ++i) c.f.add(x_offset + i, X.A(row, i));
    c.rhs = X.b[row];
    prog.inequalities.push_back(std::move(c));
  }
}

/// Least-squares program  min ||c0 + W v||^2  with v = (free block, nonneg
/// block) and an optional sum-to-one row over part of the nonneg block.
struct LeastSquares {
  la::Mat W;      // residual columns, one per variable
  la::Vec c0;     // fixed residual offset
  int n_free = 0;

  conic::ConicProgram program() const {
    conic::ConicProgram prog;
    if (n_free > 0) prog.layout.free_sizes = {n_free};
    prog.layout.nonneg_size = W.cols - n_free;
    for (int a = 0; a < W.cols; ++a) {
      for (int b = a; b < W.cols; ++b) {
        double h = 0.0;
        for (int i = 0; i < W.rows; ++i) h += W(i, a) * W(i, b);
        if (h != 0.0) prog.quadratic.push_back({a, b, 2.0 * h});
      }
      double lin = 0.0;
      for (int i = 0; i < W.rows; ++i) lin += W(i, a) * c0[i];
      prog.objective.add(a, 2.0 * lin);
    }
    prog.objective_constant = la::dot(c0, c0);
    return prog;
  }

  double residual_at(const la::Vec& v) const {
    la::Vec r = c0;
    for (int a = 0; a < W.cols; ++a)
      for (int i = 0; i < W.rows; ++i) r[i] += W(i, a) * v[a];
    return la::norm2(r);
  }
};

}  // namespace

la::Vec kappa(const ProblemInstance& instance, const SimplexWeights& alpha) {
  la::SymMatrix Q = instance.mixed_curvature(alpha);
  la::Vec rhs = la::scale(-1.0, instance.mixed_linear(alpha));
  try {
    return la::solve_spd(Q, rhs);
  } catch (const la::NotPositiveDefinite&) {
    throw SingularCurvature("kappa: mixed curvature is numerically singular");
  }
}

std::pair<KktPoint, OptimalFace> kappa_c(const ProblemInstance& instance,
                                         const SimplexWeights& alpha) {
  if (!instance.constrained())
    throw std::invalid_argument("kappa_c needs a constrained instance");
  const Polytope& X = *instance.polytope;
  const int n = instance.n();
  la::SymMatrix Q = instance.mixed_curvature(alpha);
  la::Vec phi = instance.mixed_linear(alpha);

  conic::ConicProgram prog;
  prog.layout.free_sizes = {n};
  for (int i = 0; i < n; ++i) prog.objective.add(i, phi[i]);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      if (Q(i, j) != 0.0) prog.quadratic.push_back({i, j, Q(i, j)});
  append_polytope_rows(prog, X, 0);

  conic::ConicSolution sol = conic::solve(prog);
  require_optimal(sol, "kappa_c");

  KktPoint point;
  point.x.assign(sol.values.begin(), sol.values.begin() + n);
  point.alpha = alpha;
  point.mu = sol.inequality_duals;
  point.lambda = sol.equality_duals;
  for (double& v : point.mu) v = std::max(v, 0.0);
  point.residuals = kkt_residuals(instance, point);

  OptimalFace face;
  face.anchor = point.x;
  face.polytope = X;
  const double qnorm = Q.norm_inf();
  const double lam_min = la::eig_sym(Q).values.front();
  face.singleton = lam_min > 1e-10 * std::max(1.0, qnorm);
  if (!face.singleton) {
    // Face equalities: Q x = Q anchor and phi^T x = phi^T anchor, skipping
    // rows that vanish.
    const double row_tol = 1e-12 * std::max(1.0, qnorm);
    std::vector<la::Vec> rows;
    la::Vec rhs;
    for (int i = 0; i < n; ++i) {
      la::Vec row(n);
      double big = 0.0;
      for (int j = 0; j < n; ++j) {
        row[j] = Q(i, j);
        big = std::max(big, std::abs(row[j]));
      }
      if (big <= row_tol) continue;
      rhs.push_back(la::dot(row, face.anchor));
      rows.push_back(std::move(row));
    }
    if (la::norm_inf(phi) > 1e-12 * (1.0 + qnorm)) {
      rhs.push_back(la::dot(phi, face.anchor));
      rows.push_back(phi);
    }
    face.face_A = la::Mat(static_cast<int>(rows.size()), n);
    face.face_b = rhs;
    for (size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < n; ++j) face.face_A(static_cast<int>(i), j) = rows[i][j];
  }
  return {std::move(point), std::move(face)};
}

la::Vec selection(const OptimalFace& face, const la::Vec& y) {
  if (face.singleton) return face.anchor;
  const int n = static_cast<int>(y.size());

  conic::ConicProgram prog;
  prog.layout.free_sizes = {n};
  for (int i = 0; i < n; ++i) {
    prog.quadratic.push_back({i, i, 2.0});
    prog.objective.add(i, -2.0 * y[i]);
  }
  prog.objective_constant = la::dot(y, y);
  append_polytope_rows(prog, face.polytope, 0);
  for (int row = 0; row < face.face_A.rows; ++row) {
    conic::Constraint c;
    for (int i = 0; i < n; ++i) c.f.add(i, face.face_A(row, i));
    c.rhs = face.face_b[row];
    prog.equalities.push_back(std::move(c));
  }

  conic::ConicSolution sol = conic::solve(prog);
  require_optimal(sol, "selection");
  return la::Vec(sol.values.begin(), sol.values.begin() + n);
}

KktPoint::Residuals kkt_residuals(const ProblemInstance& instance, const KktPoint& point) {
  KktPoint::Residuals res;
  la::Vec stat = la::axpy(1.0, la::symv(instance.mixed_curvature(point.alpha), point.x),
                          instance.mixed_linear(point.alpha));
  if (instance.constrained()) {
    const Polytope& X = *instance.polytope;
    if (X.q() > 0) stat = la::axpy(1.0, la::matvec_t(X.A_eq, point.lambda), stat);
    if (X.r() > 0) stat = la::axpy(1.0, la::matvec_t(X.A, point.mu), stat);
    for (int row = 0; row < X.q(); ++row) {
      double v = -X.b_eq[row];
      for (int j = 0; j < X.A_eq.cols; ++j) v += X.A_eq(row, j) * point.x[j];
      res.primal = std::max(res.primal, std::abs(v));
    }
    for (int row = 0; row < X.r(); ++row) {
      double gap = X.b[row];
      for (int j = 0; j < X.A.cols; ++j) gap -= X.A(row, j) * point.x[j];
      res.primal = std::max(res.primal, -std::min(gap, 0.0));
      res.complementarity = std::max(res.complementarity, std::abs(point.mu[row] * gap));
      res.dual = std::max(res.dual, -std::min(point.mu[row], 0.0));
    }
  }
  res.stationarity = la::norm_inf(stat);
  return res;
}

double membership_residual(const ProblemInstance& instance, const KktPoint& point) {
  return std::max(kkt_residuals(instance, point).max(), point.alpha.simplex_violation());
}

FeasibilityResult check_feasibility(const ProblemInstance& instance) {
  const int n = instance.n();
  const int m = instance.m();
  double qmax = 0.0;
  for (const auto& f : instance.basis) qmax = std::max(qmax, f.Q.norm_inf());

  FeasibilityResult out;
  out.scale = 1.0 + qmax * (1.0 + la::norm2(instance.y));

  std::vector<la::Vec> grad(m);
  for (int j = 0; j < m; ++j) grad[j] = instance.basis[j].gradient(instance.y);

  if (!instance.constrained()) {
    LeastSquares ls;
    ls.W = la::Mat(n, m);
    ls.c0.assign(n, 0.0);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < n; ++i) ls.W(i, j) = grad[j][i];

    conic::ConicProgram prog = ls.program();
    conic::Constraint sum_one;
    for (int j = 0; j < m; ++j) sum_one.f.add(j, 1.0);
    sum_one.rhs = 1.0;
    prog.equalities.push_back(std::move(sum_one));

    conic::ConicSolution sol = conic::solve(prog);
    require_optimal(sol, "check_feasibility");
    out.alpha = conic::project_simplex(sol.values);
    out.residual = ls.residual_at(out.alpha->alpha);
    out.exactly_optimal = out.residual <= 1e-7 * out.scale;
    return out;
  }

  const Polytope& X = *instance.polytope;
  const int q = X.q();
  const int r = X.r();

  double worst = 0.0;
  for (int row = 0; row < q; ++row) {
    double v = -X.b_eq[row];
    for (int j = 0; j < n; ++j) v += X.A_eq(row, j) * instance.y[j];
    worst = std::max(worst, std::abs(v));
  }
  la::Vec gap(r, 0.0);
  for (int row = 0; row < r; ++row) {
    gap[row] = X.b[row];
    for (int j = 0; j < n; ++j) gap[row] -= X.A(row, j) * instance.y[j];
    worst = std::max(worst, -gap[row]);
  }
  if (worst > 1e-9)
    throw InfeasiblePoint("test point violates the polytope by " + std::to_string(worst));

  std::vector<int> active;
  for (int row = 0; row < r; ++row)
    if (gap[row] <= 1e-9) active.push_back(row);
  const int act = static_cast<int>(active.size());

  // Variables (lambda, alpha, mu_active); the stationarity residual is
  // linear in all of them.
  LeastSquares ls;
  ls.n_free = q;
  ls.W = la::Mat(n, q + m + act);
  ls.c0.assign(n, 0.0);
  for (int i = 0; i < q; ++i)
    for (int row = 0; row < n; ++row) ls.W(row, i) = X.A_eq(i, row);
  for (int j = 0; j < m; ++j)
    for (int row = 0; row < n; ++row) ls.W(row, q + j) = grad[j][row];
  for (int t = 0; t < act; ++t)
    for (int row = 0; row < n; ++row) ls.W(row, q + m + t) = X.A(active[t], row);

  conic::ConicProgram prog = ls.program();
  conic::Constraint sum_one;
  for (int j = 0; j < m; ++j) sum_one.f.add(q + j, 1.0);
  sum_one.rhs = 1.0;
  prog.equalities.push_back(std::move(sum_one));

  conic::ConicSolution sol = conic::solve(prog);
  require_optimal(sol, "check_feasibility");

  la::Vec alpha_raw(sol.values.begin() + q, sol.values.begin() + q + m);
  out.alpha = conic::project_simplex(alpha_raw);
  out.lambda = la::Vec(sol.values.begin(), sol.values.begin() + q);
  out.mu = la::Vec(r, 0.0);
  for (int t = 0; t < act; ++t)
    (*out.mu)[active[t]] = std::max(sol.values[q + m + t], 0.0);

  la::Vec v = *out.lambda;
  v.insert(v.end(), out.alpha->alpha.begin(), out.alpha->alpha.end());
  for (int t = 0; t < act; ++t) v.push_back((*out.mu)[active[t]]);
  out.residual = ls.residual_at(v);
  out.exactly_optimal = out.residual <= 1e-7 * out.scale;
  return out;
}

std::tuple<la::Vec, la::Vec, double> fit_multipliers(const ProblemInstance& instance,
                                                     const SimplexWeights& alpha,
                                                     const la::Vec& x) {
  la::Vec c0 = la::axpy(1.0, la::symv(instance.mixed_curvature(alpha), x),
                        instance.mixed_linear(alpha));
  if (!instance.constrained()) return {la::Vec{}, la::Vec{}, la::norm2(c0)};

  const Polytope& X = *instance.polytope;
  const int n = instance.n();
  const int q = X.q();
  const int r = X.r();
  const double act_tol = 1e-8 * (1.0 + (r > 0 ? la::norm_inf(X.b) : 0.0));
  std::vector<int> active;
  for (int row = 0; row < r; ++row) {
    double gap = X.b[row];
    for (int j = 0; j < n; ++j) gap -= X.A(row, j) * x[j];
    if (gap <= act_tol) active.push_back(row);
  }
  const int act = static_cast<int>(active.size());
  la::Vec mu(r, 0.0);
  la::Vec lambda(q, 0.0);
  if (q + act == 0) return {std::move(mu), std::move(lambda), la::norm2(c0)};

  LeastSquares ls;
  ls.n_free = q;
  ls.W = la::Mat(n, q + act);
  ls.c0 = c0;
  for (int i = 0; i < q; ++i)
    for (int row = 0; row < n; ++row) ls.W(row, i) = X.A_eq(i, row);
  for (int t = 0; t < act; ++t)
    for (int row = 0; row < n; ++row) ls.W(row, q + t) = X.A(active[t], row);

  conic::ConicSolution sol = conic::solve(ls.program());
  require_optimal(sol, "fit_multipliers");
  lambda.assign(sol.values.begin(), sol.values.begin() + q);
  for (int t = 0; t < act; ++t) mu[active[t]] = std::max(sol.values[q + t], 0.0);

  la::Vec v = lambda;
  for (int t = 0; t < act; ++t) v.push_back(mu[active[t]]);
  return {std::move(mu), std::move(lambda), ls.residual_at(v)};
}

CompactnessBound compactness_bound(const ProblemInstance& instance) {
  CompactnessBound out;
  out.Lambda = std::numeric_limits<double>::infinity();
  double drive = 0.0;  // max_j ||Q_j x_j^f|| = max_j ||phi_j||
  for (const auto& f : instance.basis) {
    la::Vec xf = f.center ? *f.center : *to_center_form(f).center;
    out.R = std::max(out.R, la::norm2(xf));
    drive = std::max(drive, la::norm2(f.phi));
    out.Lambda = std::min(out.Lambda, la::eig_sym(f.Q).values.front());
  }
  if (!(out.Lambda > 0.0))
    throw SingularCurvature("compactness bound needs positive definite curvature");
  out.radius = std::max(out.R, drive) / out.Lambda;
  return out;
}

std::vector<std::pair<SimplexWeights, la::Vec>> sample_optima(const ProblemInstance& instance,
                                                              int count, uint64_t seed) {
  std::vector<std::pair<SimplexWeights, la::Vec>> out;
  out.reserve(static_cast<size_t>(std::max(count, 0)));
  Rng rng(seed);
  for (int t = 0; t < count; ++t) {
    SimplexWeights w;
    w.alpha = rng.dirichlet(instance.m());
    la::Vec x = instance.constrained() ? selection(kappa_c(instance, w).second, instance.y)
                                       : kappa(instance, w);
    out.emplace_back(std::move(w), std::move(x));
  }
  return out;
}

}  // namespace pgm::optima
