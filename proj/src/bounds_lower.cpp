#include "pgm/bounds_lower.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "pgm/optima.hpp"

namespace pgm::bounds {

namespace {

// Shared assembly: the unconstrained program is the constrained one with
// r = q = 0 and no polytope rows, so a single builder covers both modes.
conic::ConicProgram assemble(const ProblemInstance& inst, bool constrained_mode,
                             const LmiOptions& opt) {
  const int n = inst.n();
  const int m = inst.m();
  const int r = constrained_mode ? inst.polytope->r() : 0;
  const int q = constrained_mode ? inst.polytope->q() : 0;
  const int d = 1 + n + m + r;

  conic::ConicProgram prog;
  if (q > 0) prog.layout.free_sizes = {q};
  prog.layout.psd_orders = {d};

  const int kOne = 0;
  auto ix = [&](int i) { return 1 + i; };
  auto ia = [&](int j) { return 1 + n + j; };
  auto iu = [&](int k) { return 1 + n + m + k; };
  auto E = [&](int a, int b) { return prog.layout.psd_entry(0, a, b); };

  // With a multiplier bound B the optimal moment matrix carries mu entries
  // of size up to B and B^2, and the PSD projection (unlike the rows) cannot
  // be equilibrated, which slows the solver by the square of that spread.
  // Assemble in rescaled monomials mu' = mu / B instead, so the optimal
  // block stays O(1)-normed; lower_bound undoes the scaling on extraction.
  const double mu_scale =
      (constrained_mode && opt.mu_bound) ? std::max(1.0, *opt.mu_bound) : 1.0;

  // Objective: sum_i (M_{x_i x_i} - 2 y_i M_{1 x_i}) + ||y||^2.
  for (int i = 0; i < n; ++i) {
    prog.objective.add(E(ix(i), ix(i)), 1.0);
    prog.objective.add(E(kOne, ix(i)), -2.0 * inst.y[i]);
  }
  prog.objective_constant = la::dot(inst.y, inst.y);

  auto add_eq = [&](conic::Constraint c) { prog.equalities.push_back(std::move(c)); };
  auto add_in = [&](conic::Constraint c) { prog.inequalities.push_back(std::move(c)); };

  {  // M_{11} = 1
    conic::Constraint c;
    c.f.add(E(kOne, kOne), 1.0);
    c.rhs = 1.0;
    add_eq(std::move(c));
  }

  {  // simplex lift: first moments of alpha sum to one ...
    conic::Constraint c;
    for (int j = 0; j < m; ++j) c.f.add(E(kOne, ia(j)), 1.0);
    c.rhs = 1.0;
    add_eq(std::move(c));
  }
  for (int j = 0; j < m; ++j) {  // ... and are nonnegative
    conic::Constraint c;
    c.f.add(E(kOne, ia(j)), -1.0);
    add_in(std::move(c));
  }

  // Lifted stationarity, coordinate by coordinate:
  // sum_j [(Q_j M_{x alpha_j})_i + phi_{j,i} M_{1 alpha_j}]
  //   (+ (A_eq^T lambda)_i + (A^T M_{mu 1})_i in constrained mode) = 0.
  for (int i = 0; i < n; ++i) {
    conic::Constraint c;
    for (int j = 0; j < m; ++j) {
      for (int l = 0; l < n; ++l) {
        double w = inst.basis[j].Q(i, l);
        if (w != 0.0) c.f.add(E(ix(l), ia(j)), w);
      }
      c.f.add(E(kOne, ia(j)), inst.basis[j].phi[i]);
    }
    if (constrained_mode) {
      const Polytope& P = *inst.polytope;
      for (int t = 0; t < q; ++t) c.f.add(t, P.A_eq(t, i));
      for (int k = 0; k < r; ++k) c.f.add(E(kOne, iu(k)), P.A(k, i));
    }
    add_eq(std::move(c));
  }

  if (constrained_mode) {
    const Polytope& P = *inst.polytope;
    for (int t = 0; t < q; ++t) {  // A_eq M_{x1} = b_eq
      conic::Constraint c;
      for (int i = 0; i < n; ++i) c.f.add(E(kOne, ix(i)), P.A_eq(t, i));
      c.rhs = P.b_eq[t];
      add_eq(std::move(c));
    }
    for (int k = 0; k < r; ++k) {  // A M_{x1} <= b
      conic::Constraint c;
      for (int i = 0; i < n; ++i) c.f.add(E(kOne, ix(i)), P.A(k, i));
      c.rhs = P.b[k];
      add_in(std::move(c));
    }
    for (int k = 0; k < r; ++k) {  // first moments of mu are nonnegative
      conic::Constraint c;
      c.f.add(E(kOne, iu(k)), -1.0);
      add_in(std::move(c));
    }
    {  // lifted complementarity: -b^T M_{mu 1} + sum_k A_k M_{x mu_k} = 0
      conic::Constraint c;
      for (int k = 0; k < r; ++k) {
        c.f.add(E(kOne, iu(k)), -P.b[k]);
        for (int i = 0; i < n; ++i) c.f.add(E(ix(i), iu(k)), P.A(k, i));
      }
      add_eq(std::move(c));
    }
  }

  if (opt.valid_cuts) {
    for (int i = 0; i < m; ++i) {  // row sums of the alpha block match alpha
      conic::Constraint c;
      c.f.add(E(kOne, ia(i)), 1.0);
      for (int j = 0; j < m; ++j) c.f.add(E(ia(i), ia(j)), -1.0);
      add_eq(std::move(c));
    }
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {  // off-diagonal alpha products >= 0
        conic::Constraint c;
        c.f.add(E(ia(i), ia(j)), -1.0);
        add_in(std::move(c));
      }
    }
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {  // products below either first moment
        conic::Constraint c1;
        c1.f.add(E(ia(i), ia(j)), 1.0);
        c1.f.add(E(kOne, ia(i)), -1.0);
        add_in(std::move(c1));
        conic::Constraint c2;
        c2.f.add(E(ia(i), ia(j)), 1.0);
        c2.f.add(E(kOne, ia(j)), -1.0);
        add_in(std::move(c2));
      }
    }
    for (int i = 0; i < m; ++i) {  // squares below first moments
      conic::Constraint c;
      c.f.add(E(ia(i), ia(i)), 1.0);
      c.f.add(E(kOne, ia(i)), -1.0);
      add_in(std::move(c));
    }
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {  // pair products capped at 1/4
        conic::Constraint c;
        c.f.add(E(ia(i), ia(j)), 1.0);
        c.rhs = 0.25;
        add_in(std::move(c));
      }
    }
    if (constrained_mode) {
      for (int k = 0; k < r; ++k) {
        for (int l = k + 1; l < r; ++l) {  // multiplier products >= 0
          conic::Constraint c;
          c.f.add(E(iu(k), iu(l)), -1.0);
          add_in(std::move(c));
        }
      }
      for (int k = 0; k < r; ++k) {
        for (int i = 0; i < m; ++i) {
          conic::Constraint c1;  // mu-alpha products >= 0
          c1.f.add(E(iu(k), ia(i)), -1.0);
          add_in(std::move(c1));
          conic::Constraint c2;  // ... and below the mu first moment
          c2.f.add(E(iu(k), ia(i)), 1.0);
          c2.f.add(E(kOne, iu(k)), -1.0);
          add_in(std::move(c2));
        }
      }
    }
  }

  if (constrained_mode && opt.mu_bound) {
    const double bound = *opt.mu_bound;
    for (int k = 0; k < r; ++k) {
      conic::Constraint c1;
      c1.f.add(E(kOne, iu(k)), 1.0);
      c1.rhs = bound;
      add_in(std::move(c1));
      conic::Constraint c2;
      c2.f.add(E(iu(k), iu(k)), 1.0);
      c2.rhs = bound * bound;
      add_in(std::move(c2));
    }
  }

  return prog;
}

// Rank-1 re-completion.  The solver converges to the interior of the
// optimal face, so even when the relaxation is exact the returned matrix
// usually has a singular ratio far above the certification threshold.  If
// the candidate minimizer read off the first moment row validates
// independently — membership in the optima set and squared distance equal
// to the bound, both at certification tolerance — then its rank-1 lift is
// itself an optimal matrix for the relaxation, and it replaces the solver's
// matrix in the report.
void recomplete_rank1(const ProblemInstance& inst, const LmiOptions& opt,
                      LowerBoundResult& out) {
  const MomentMatrix& M = out.M;
  const double m11 = M.one_one();
  if (!(m11 > 0.5)) return;

  KktPoint p;
  p.x.resize(M.n);
  for (int i = 0; i < M.n; ++i) p.x[i] = M.one_x(i) / m11;
  la::Vec a(M.m);
  for (int j = 0; j < M.m; ++j) a[j] = M.one_alpha(j) / m11;
  p.alpha = conic::project_simplex(a);
  p.mu.resize(M.r);
  for (int k = 0; k < M.r; ++k) p.mu[k] = std::max(M.one_mu(k) / m11, 0.0);
  p.lambda = M.lambda_free;

  if (optima::membership_residual(inst, p) > 1e-6) return;
  double dist = 0.0;
  for (int i = 0; i < M.n; ++i) {
    const double di = inst.y[i] - p.x[i];
    dist += di * di;
  }
  if (std::abs(dist - out.p_low) > 1e-6 * (1.0 + out.p_low)) return;
  if (opt.mu_bound)
    for (double mk : p.mu)
      if (mk > *opt.mu_bound) return;

  la::Vec v(M.order());
  v[MomentMatrix::idx_one()] = 1.0;
  for (int i = 0; i < M.n; ++i) v[M.idx_x(i)] = p.x[i];
  for (int j = 0; j < M.m; ++j) v[M.idx_alpha(j)] = p.alpha.alpha[j];
  for (int k = 0; k < M.r; ++k) v[M.idx_mu(k)] = p.mu[k];
  for (int i = 0; i < M.order(); ++i)
    for (int j = i; j < M.order(); ++j) out.M.values.set(i, j, v[i] * v[j]);
}

}  // namespace

conic::ConicProgram assemble_unconstrained_lmi(const ProblemInstance& inst,
                                               const LmiOptions& opt) {
  return assemble(inst, false, opt);
}

conic::ConicProgram assemble_constrained_lmi(const ProblemInstance& inst,
                                             const LmiOptions& opt) {
  if (!inst.constrained())
    throw std::invalid_argument("assemble_constrained_lmi needs a polytope");
  return assemble(inst, true, opt);
}

LowerBoundResult lower_bound(const ProblemInstance& inst, const LmiOptions& opt) {
  const bool con = inst.constrained();
  conic::ConicProgram prog = con ? assemble_constrained_lmi(inst, opt)
                                 : assemble_unconstrained_lmi(inst, opt);
  conic::ConicSolution sol = conic::solve(prog, opt.solver);

  LowerBoundResult out;
  out.stats.iterations = sol.iterations;
  out.stats.primal_residual = sol.primal_residual;
  out.stats.dual_residual = sol.dual_residual;
  out.stats.gap = sol.gap;

  if (sol.status == conic::SolveStatus::Infeasible) {
    out.outcome = LowerOutcome::InfeasibleBasis;
    out.infeasibility_certificate = sol.certificate;
    out.certificate_support = sol.certificate_support;
    out.stats.status = "infeasible";
    return out;
  }
  if (sol.status == conic::SolveStatus::MaxIterations) {
    throw SolverFailure("lower_bound: conic solve hit the iteration cap (primal " +
                        std::to_string(sol.primal_residual) + ", dual " +
                        std::to_string(sol.dual_residual) + ", gap " +
                        std::to_string(sol.gap) + ")");
  }

  out.M.n = inst.n();
  out.M.m = inst.m();
  out.M.r = con ? inst.polytope->r() : 0;
  out.M.values = sol.psd_block(prog.layout, 0);
  const int q = con ? inst.polytope->q() : 0;
  if (q > 0) out.M.lambda_free = la::Vec(sol.values.begin(), sol.values.begin() + q);

  // Both solver objectives agree at tolerance; taking the smaller (then
  // clamping at the provable floor 0) keeps the report a genuine lower bound.
  out.p_low = std::max(0.0, std::min(sol.objective, sol.dual_objective));
  out.stats.status = "optimal";
  recomplete_rank1(inst, opt, out);
  out.cert = certify_rank1(out.M, inst, opt.rank1_threshold);
  return out;
}

Rank1Certificate certify_rank1(const MomentMatrix& M, const ProblemInstance& inst,
                               double threshold) {
  Rank1Certificate cert;
  la::EigDecomposition eig = la::eig_sym(M.values);
  const int d = M.values.order;
  const double s1 = d >= 1 ? std::max(eig.values[d - 1], 0.0) : 0.0;
  const double s2 = d >= 2 ? std::max(eig.values[d - 2], 0.0) : 0.0;
  cert.singular_ratio = s1 > 0.0 ? s2 / s1 : 1.0;
  if (cert.singular_ratio > threshold) return cert;

  const double m11 = M.one_one();
  if (!(m11 > 0.5)) return cert;  // moment normalization lost; do not extract
  cert.extracted_x.resize(M.n);
  for (int i = 0; i < M.n; ++i) cert.extracted_x[i] = M.one_x(i) / m11;
  la::Vec a(M.m);
  for (int j = 0; j < M.m; ++j) a[j] = M.one_alpha(j) / m11;
  cert.extracted_alpha = conic::project_simplex(a);
  cert.extracted_mu.resize(M.r);
  for (int k = 0; k < M.r; ++k) cert.extracted_mu[k] = std::max(M.one_mu(k) / m11, 0.0);

  KktPoint p;
  p.x = cert.extracted_x;
  p.alpha = cert.extracted_alpha;
  p.mu = cert.extracted_mu;
  p.lambda = M.lambda_free;
  cert.certified = optima::membership_residual(inst, p) <= 1e-6;
  return cert;
}

}  // namespace pgm::bounds
