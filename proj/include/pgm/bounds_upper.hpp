#pragma once

// Upper bounds on the squared distance from y to the optima set, computed
// from explicit witnesses: every candidate x produced here lies in the set
// (up to residual tolerance), so ||y - x||^2 is an upper bound by
// construction.  Unconstrained mode runs multistart projected-gradient
// descent over the weight simplex; constrained mode scans a deterministic
// simplex grid and polishes the winner with derivative-free golden-section
// moves (the constrained objective need not be differentiable).

#include <cstdint>
#include <utility>
#include <vector>

#include "pgm/core.hpp"

namespace pgm::bounds {

struct SearchOptions {
  int multistarts = 16;
  int max_iters = 500;
  double step_init = 1.0;
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  double grad_tol = 1e-9;
  uint64_t seed = 0;
  /// Constrained mode: simplex lattice spacing (grid points at multiples of
  /// the nearest 1/K).
  double grid_resolution = 0.05;
};

struct UpperBoundResult {
  double p_up = 0.0;
  SimplexWeights alpha;
  la::Vec x;
  la::Vec mu;      // constrained-mode witness multipliers (empty otherwise)
  la::Vec lambda;
  /// Best objective per start (unconstrained) or per successfully evaluated
  /// candidate in enumeration order (constrained).  In both modes the first
  /// entry is the feasibility-seeded start (the stationarity-residual
  /// minimizer), which always runs in addition to the configured starts.
  std::vector<double> trace;
  /// Starts whose projected-gradient norm reached grad_tol; in constrained
  /// mode, the number of candidates that evaluated successfully.
  int converged_starts = 0;
};

/// F(alpha) = ||kappa(alpha) - y||^2 and its exact gradient
/// grad_j = 2 (kappa - y)^T Q_alpha^{-1} Q_j (x_j^f - kappa),
/// computed with a single factorization of the mixed curvature.
std::pair<double, la::Vec> objective_and_gradient(const ProblemInstance& instance,
                                                  const SimplexWeights& alpha);

UpperBoundResult upper_bound_unconstrained(const ProblemInstance& instance,
                                           const SearchOptions& options = {});

UpperBoundResult upper_bound_constrained(const ProblemInstance& instance,
                                         const SearchOptions& options = {});

/// Mode dispatch on instance.constrained().
UpperBoundResult upper_bound(const ProblemInstance& instance,
                             const SearchOptions& options = {});

}  // namespace pgm::bounds
