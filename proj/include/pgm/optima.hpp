#pragma once

// Optima-set machinery: the solution maps kappa (unconstrained) and kappa_c
// (constrained KKT), the minimal selection onto an optimal face, exact
// optimality testing at the observed point, membership residuals and the
// compactness ball.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "pgm/core.hpp"

namespace pgm::optima {

/// Thrown by constrained-mode entry points when the test point lies outside
/// the polytope beyond tolerance (such a point can never be optimal).
struct InfeasiblePoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Solution set of the constrained QP for one weight vector: the anchor is
/// one minimizer; the full set is the polytope intersected with the affine
/// system  Q_alpha x = Q_alpha anchor,  phi_alpha^T x = phi_alpha^T anchor
/// (near-zero rows dropped).  When Q_alpha is positive definite the face is
/// the singleton {anchor}.
struct OptimalFace {
  la::Vec anchor;
  la::Mat face_A;  // extra equality rows (possibly none)
  la::Vec face_b;
  Polytope polytope;
  bool singleton = true;
};

struct FeasibilityResult {
  bool exactly_optimal = false;
  std::optional<SimplexWeights> alpha;
  std::optional<la::Vec> mu;      // constrained mode, full length r
  std::optional<la::Vec> lambda;  // constrained mode, length q
  double residual = 0.0;
  double scale = 1.0;  // threshold scale: exactly_optimal iff residual <= 1e-7*scale
};

struct CompactnessBound {
  double R = 0.0;       // max_j ||x_j^f||_2
  double Lambda = 0.0;  // min_j lambda_min(Q_j)
  double radius = 0.0;  // containment radius, see compactness_bound
};

/// Unique unconstrained minimizer of f_alpha (Assumption: every Q_j PD).
la::Vec kappa(const ProblemInstance& instance, const SimplexWeights& alpha);

/// Constrained minimizer of f_alpha over the polytope with its KKT
/// certificate and the optimal-face description.
std::pair<KktPoint, OptimalFace> kappa_c(const ProblemInstance& instance,
                                         const SimplexWeights& alpha);

/// Point of the face nearest to y in Euclidean norm.
la::Vec selection(const OptimalFace& face, const la::Vec& y);

/// Decides whether y is exactly optimal for some convex combination of the
/// basis, by minimizing the stationarity (and in constrained mode, active-set
/// KKT) residual over the admissible weights and multipliers.
FeasibilityResult check_feasibility(const ProblemInstance& instance);

/// Largest violation of the lifted optimality system by the candidate point.
double membership_residual(const ProblemInstance& instance, const KktPoint& point);

/// The four KKT residual norms of (x, alpha, mu, lambda) for the instance.
KktPoint::Residuals kkt_residuals(const ProblemInstance& instance, const KktPoint& point);

/// Least-squares multipliers (mu, lambda) for stationarity at a given point
/// with the active set read off x; returns the attained stationarity
/// residual as the third element.
std::tuple<la::Vec, la::Vec, double> fit_multipliers(const ProblemInstance& instance,
                                                     const SimplexWeights& alpha,
                                                     const la::Vec& x);

/// Ball radius containing every unconstrained optimum:
/// max(max_j ||x_j^f||, max_j ||Q_j x_j^f||) / min_j lambda_min(Q_j).
CompactnessBound compactness_bound(const ProblemInstance& instance);

/// Deterministic Dirichlet sampling of the optima set.
std::vector<std::pair<SimplexWeights, la::Vec>> sample_optima(const ProblemInstance& instance,
                                                              int count, uint64_t seed);

}  // namespace pgm::optima
