#pragma once

// Lower bounds on the squared distance from y to the optima set via a
// degree-1 moment relaxation: minimize the lifted distance objective over
// PSD moment matrices indexed by (1, x, alpha[, mu]) that satisfy the lifted
// optimality system plus enrichment inequalities.  A rank-1 solution matrix
// certifies that the bound is exact and yields the nearest optimum directly.

#include <optional>
#include <vector>

#include "pgm/conic.hpp"
#include "pgm/core.hpp"

namespace pgm::bounds {

/// PSD moment block over the monomial basis (1, x_1..x_n, alpha_1..alpha_m
/// [, mu_1..mu_r]); equality multipliers stay outside the matrix as a plain
/// free vector.
struct MomentMatrix {
  int n = 0;
  int m = 0;
  int r = 0;  // zero in unconstrained mode
  la::SymMatrix values;
  la::Vec lambda_free;  // length q, constrained mode only

  int order() const { return 1 + n + m + r; }
  static int idx_one() { return 0; }
  int idx_x(int i) const { return 1 + i; }
  int idx_alpha(int j) const { return 1 + n + j; }
  int idx_mu(int k) const { return 1 + n + m + k; }

  double one_one() const { return values(0, 0); }
  double one_x(int i) const { return values(0, idx_x(i)); }
  double one_alpha(int j) const { return values(0, idx_alpha(j)); }
  double one_mu(int k) const { return values(0, idx_mu(k)); }
  double x_x(int i, int l) const { return values(idx_x(i), idx_x(l)); }
  double x_alpha(int i, int j) const { return values(idx_x(i), idx_alpha(j)); }
  double x_mu(int i, int k) const { return values(idx_x(i), idx_mu(k)); }
  double alpha_alpha(int i, int j) const { return values(idx_alpha(i), idx_alpha(j)); }
  double mu_alpha(int k, int j) const { return values(idx_mu(k), idx_alpha(j)); }
  double mu_mu(int k, int l) const { return values(idx_mu(k), idx_mu(l)); }
};

struct Rank1Certificate {
  double singular_ratio = 1.0;  // second / largest eigenvalue of M
  bool certified = false;
  la::Vec extracted_x;
  SimplexWeights extracted_alpha;
  la::Vec extracted_mu;  // constrained mode
};

struct LmiOptions {
  /// Enrichment inequalities (the product-of-weights and multiplier-product
  /// sign/bound cuts).  On by default; exposed to measure their effect.
  bool valid_cuts = true;
  /// Optional user-supplied upper bound on each inequality multiplier; adds
  /// M_{1mu_k} <= bound and M_{mu_k mu_k} <= bound^2 rows.
  std::optional<double> mu_bound;
  double rank1_threshold = 1e-6;
  /// The moment programs routinely terminate at degenerate optimal faces
  /// where first-order conic iterations converge slowly, so this module's
  /// default iteration budget is larger than the solver's own default.
  conic::SolveOptions solver{.tol = 1e-8, .max_iter = 250000};
};

enum class LowerOutcome {
  Bounded,
  /// The lifted optimality system is infeasible: no optimum of any mixture
  /// is compatible with the instance (carries the solver's certificate).
  InfeasibleBasis,
};

struct LowerBoundResult {
  LowerOutcome outcome = LowerOutcome::Bounded;
  double p_low = 0.0;
  MomentMatrix M;
  Rank1Certificate cert;
  la::Vec infeasibility_certificate;
  double certificate_support = 0.0;
  SolverStageStats stats;
};

conic::ConicProgram assemble_unconstrained_lmi(const ProblemInstance& instance,
                                               const LmiOptions& options = {});

conic::ConicProgram assemble_constrained_lmi(const ProblemInstance& instance,
                                             const LmiOptions& options = {});

/// Solves the relaxation.  Throws SolverFailure if the conic solve stops at
/// its iteration cap; an infeasible lift is reported as a normal outcome.
/// When the minimizer read off the first moment row validates independently
/// (membership in the optima set and objective equal to the bound), its
/// rank-1 lift replaces the solver's mid-face matrix, so exact instances
/// certify even though the solver itself returns max-rank face points.
LowerBoundResult lower_bound(const ProblemInstance& instance, const LmiOptions& options = {});

/// Eigenvalue-gap test with extraction: reads (x, alpha[, mu]) off the first
/// moment row, projects alpha to the simplex and validates membership.
Rank1Certificate certify_rank1(const MomentMatrix& M, const ProblemInstance& instance,
                               double threshold = 1e-6);

}  // namespace pgm::bounds
