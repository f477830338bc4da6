#include "pgm/core.hpp"

#include <cmath>
#include <sstream>

#include "pgm/conic.hpp"

namespace pgm {

double SimplexWeights::simplex_violation() const {
  double neg = 0.0, sum = 0.0;
  for (double a : alpha) {
    neg = std::max(neg, -a);
    sum += a;
  }
  return std::max(neg, std::abs(sum - 1.0));
}

SimplexWeights SimplexWeights::vertex(int m, int j) {
  SimplexWeights w;
  w.alpha.assign(m, 0.0);
  w.alpha[j] = 1.0;
  return w;
}

SimplexWeights SimplexWeights::barycenter(int m) {
  SimplexWeights w;
  w.alpha.assign(m, 1.0 / m);
  return w;
}

la::Vec QuadraticFunction::gradient(const la::Vec& x) const {
  la::Vec g = la::symv(Q, x);
  for (int i = 0; i < dim(); ++i) g[i] += phi[i];
  return g;
}

QuadraticFunction QuadraticFunction::from_center(la::SymMatrix Q, la::Vec x_f) {
  QuadraticFunction f;
  f.phi = la::scale(-1.0, la::symv(Q, x_f));
  f.Q = std::move(Q);
  f.center = std::move(x_f);
  return f;
}

QuadraticFunction QuadraticFunction::from_linear(la::SymMatrix Q, la::Vec phi) {
  QuadraticFunction f;
  f.Q = std::move(Q);
  f.phi = std::move(phi);
  return f;
}

la::SymMatrix ProblemInstance::mixed_curvature(const SimplexWeights& w) const {
  la::SymMatrix S(n());
  for (int j = 0; j < m(); ++j)
    for (int k = 0; k < la::SymMatrix::packed_size(n()); ++k)
      S.packed[k] += w.alpha[j] * basis[j].Q.packed[k];
  return S;
}

la::Vec ProblemInstance::mixed_linear(const SimplexWeights& w) const {
  la::Vec v(n(), 0.0);
  for (int j = 0; j < m(); ++j)
    for (int i = 0; i < n(); ++i) v[i] += w.alpha[j] * basis[j].phi[i];
  return v;
}

double KktPoint::Residuals::max() const {
  return std::max(std::max(stationarity, primal), std::max(complementarity, dual));
}

double relative_asymmetry(const la::Mat& Q) {
  double asym = 0.0, mag = 0.0;
  for (int i = 0; i < Q.rows; ++i)
    for (int j = 0; j < Q.cols; ++j) {
      asym = std::max(asym, std::abs(Q(i, j) - Q(j, i)));
      mag = std::max(mag, std::abs(Q(i, j)));
    }
  return asym / std::max(1.0, mag);
}

QuadraticFunction to_center_form(const QuadraticFunction& f) {
  la::EigDecomposition eig = la::eig_sym(f.Q);
  if (eig.values.front() < 1e-10)
    throw SingularCurvature("curvature eigenvalue " + std::to_string(eig.values.front()) +
                            " below 1e-10: center is not unique");
  QuadraticFunction out = f;
  out.center = la::solve_spd(f.Q, la::scale(-1.0, f.phi));
  return out;
}

QuadraticFunction psd_clamped(const QuadraticFunction& f) {
  la::EigDecomposition eig = la::eig_sym(f.Q);
  const int n = f.dim();
  if (eig.values.front() < -1e-10)
    throw SingularCurvature("curvature eigenvalue " + std::to_string(eig.values.front()) +
                            " below -1e-10: not repairable as PSD");
  if (eig.values.front() >= 0.0) return f;
  QuadraticFunction out = f;
  out.Q = la::SymMatrix(n);
  for (int k = 0; k < n; ++k) {
    const double lam = std::max(eig.values[k], 0.0);
    if (lam == 0.0) continue;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) out.Q.add(i, j, lam * eig.vectors(i, k) * eig.vectors(j, k));
  }
  return out;
}

namespace {

bool all_finite(const la::Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool all_finite(const la::Mat& m) { return all_finite(m.a); }

// Margin-maximization LP over the polytope: max t subject to
// A v + t 1 <= b and A_eq v = b_eq.  A positive optimum is the Slater
// margin; a nonpositive one means the interior is empty, and infeasibility
// means even the equality system has no solution.
struct SlaterOutcome {
  bool solved = false;
  bool infeasible = false;
  double margin = 0.0;
};

SlaterOutcome slater_margin(const Polytope& poly, int n) {
  conic::ConicProgram prog;
  prog.layout.free_sizes = {n, 1};  // v, then t
  const int t_index = n;
  prog.objective.add(t_index, -1.0);  // maximize t
  for (int i = 0; i < poly.q(); ++i) {
    conic::Constraint c;
    for (int j = 0; j < n; ++j) c.f.add(j, poly.A_eq(i, j));
    c.rhs = poly.b_eq[i];
    prog.equalities.push_back(c);
  }
  for (int k = 0; k < poly.r(); ++k) {
    conic::Constraint c;
    for (int j = 0; j < n; ++j) c.f.add(j, poly.A(k, j));
    c.f.add(t_index, 1.0);
    c.rhs = poly.b[k];
    prog.inequalities.push_back(c);
  }
  {
    // Keep the LP bounded when the interior has unbounded depth.
    conic::Constraint cap;
    cap.f.add(t_index, 1.0);
    cap.rhs = 1e6;
    prog.inequalities.push_back(cap);
  }
  conic::ConicSolution sol = conic::solve(prog);
  SlaterOutcome out;
  if (sol.status == conic::SolveStatus::Infeasible) {
    out.solved = true;
    out.infeasible = true;
    return out;
  }
  if (sol.status == conic::SolveStatus::Optimal) {
    out.solved = true;
    out.margin = sol.values[t_index];
  }
  return out;
}

}  // namespace

ValidationReport validate(const ProblemInstance& instance) {
  ValidationReport report;
  auto flag = [&report](const std::string& msg) { report.violations.push_back(msg); };

  const int n = instance.n();
  const int m = instance.m();
  if (m < 1) flag("basis is empty (m >= 1 required)");
  if (n < 1) flag("test point y is empty (n >= 1 required)");
  if (!all_finite(instance.y)) flag("y contains a non-finite value");
  if (m < 1 || n < 1) return report;

  for (int j = 0; j < m; ++j) {
    const QuadraticFunction& f = instance.basis[j];
    const std::string name = "Q_" + std::to_string(j + 1);
    if (f.Q.order != n) {
      flag(name + " has order " + std::to_string(f.Q.order) + ", expected " + std::to_string(n));
      continue;
    }
    if (static_cast<int>(f.phi.size()) != n) {
      flag("phi_" + std::to_string(j + 1) + " has length " + std::to_string(f.phi.size()) +
           ", expected " + std::to_string(n));
      continue;
    }
    if (!all_finite(f.Q.packed) || !all_finite(f.phi)) {
      flag("basis entry " + std::to_string(j + 1) + " contains a non-finite value");
      continue;
    }
    if (f.source_asymmetry > 1e-8) {
      std::ostringstream os;
      os << name << " relative asymmetry " << f.source_asymmetry << " exceeds 1e-8";
      flag(os.str());
    }
    la::EigDecomposition eig = la::eig_sym(f.Q);
    const double lam_min = eig.values.front();
    if (!instance.constrained()) {
      if (lam_min <= 1e-10 * std::max(1.0, f.Q.norm_inf()))
        flag(name + " not PD in unconstrained mode (min eigenvalue " + std::to_string(lam_min) + ")");
    } else if (lam_min < -1e-10) {
      flag(name + " not PSD in constrained mode (min eigenvalue " + std::to_string(lam_min) + ")");
    }
    if (f.center) {
      if (static_cast<int>(f.center->size()) != n) {
        flag("center of basis entry " + std::to_string(j + 1) + " has wrong length");
      } else {
        la::Vec should = la::symv(f.Q, *f.center);
        double err = 0.0;
        for (int i = 0; i < n; ++i) err = std::max(err, std::abs(should[i] + f.phi[i]));
        if (err > 1e-8 * (1.0 + f.Q.norm_inf()))
          flag("center form of basis entry " + std::to_string(j + 1) +
               " inconsistent: phi != -Q x_f");
      }
    }
  }

  if (instance.constrained()) {
    const Polytope& poly = *instance.polytope;
    bool dims_ok = true;
    if (poly.q() > 0 && poly.A_eq.cols != n) {
      flag("A_eq has " + std::to_string(poly.A_eq.cols) + " columns, expected " + std::to_string(n));
      dims_ok = false;
    }
    if (static_cast<int>(poly.b_eq.size()) != poly.q()) {
      flag("b_eq length does not match A_eq row count");
      dims_ok = false;
    }
    if (poly.r() > 0 && poly.A.cols != n) {
      flag("A has " + std::to_string(poly.A.cols) + " columns, expected " + std::to_string(n));
      dims_ok = false;
    }
    if (static_cast<int>(poly.b.size()) != poly.r()) {
      flag("b length does not match A row count");
      dims_ok = false;
    }
    if (dims_ok && (!all_finite(poly.A_eq) || !all_finite(poly.b_eq) || !all_finite(poly.A) ||
                    !all_finite(poly.b))) {
      flag("polytope contains a non-finite value");
      dims_ok = false;
    }
    if (dims_ok && poly.q() + poly.r() > 0) {
      SlaterOutcome slater = slater_margin(poly, n);
      if (!slater.solved) {
        flag("Slater margin LP did not converge");
      } else if (slater.infeasible) {
        flag("polytope is infeasible (equality system has no solution)");
      } else if (slater.margin <= 1e-9) {
        std::ostringstream os;
        os << "Slater margin <= 0 within tolerance (computed margin " << slater.margin << ")";
        flag(os.str());
      }
    }
  }

  return report;
}

}  // namespace pgm
