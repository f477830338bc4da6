#pragma once

// Domain types shared by every other module: quadratic dictionaries,
// polytopes, problem instances, simplex weights, KKT points and the combined
// bounds report.

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pgm/densela.hpp"

namespace pgm {

struct SingularCurvature : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when an internal conic solve ends without an optimality
/// certificate (iteration cap or unexpected infeasibility).
struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A point of the probability simplex.
struct SimplexWeights {
  la::Vec alpha;

  int size() const { return static_cast<int>(alpha.size()); }
  /// max(negativity, |sum - 1|).
  double simplex_violation() const;
  static SimplexWeights vertex(int m, int j);
  static SimplexWeights barycenter(int m);
};

// One dictionary entry f(x) = x^T Q x / 2 + phi^T x (constant dropped).
// When Q is PD the center form f(x) = (x - x_f)^T Q (x - x_f)/2 is available
// with phi = -Q x_f.
struct QuadraticFunction {
  la::SymMatrix Q;
  la::Vec phi;
  std::optional<la::Vec> center;   // x_f, when known
  double source_asymmetry = 0.0;   // relative asymmetry of the raw input

  int dim() const { return Q.order; }
  la::Vec gradient(const la::Vec& x) const;  // Q x + phi

  static QuadraticFunction from_center(la::SymMatrix Q, la::Vec x_f);
  static QuadraticFunction from_linear(la::SymMatrix Q, la::Vec phi);
};

/// X = {x | A_eq x = b_eq, A x <= b}; empty blocks allowed.
struct Polytope {
  la::Mat A_eq;
  la::Vec b_eq;
  la::Mat A;
  la::Vec b;

  int q() const { return A_eq.rows; }
  int r() const { return A.rows; }
};

struct ProblemInstance {
  std::vector<QuadraticFunction> basis;
  std::optional<Polytope> polytope;
  la::Vec y;

  int n() const { return static_cast<int>(y.size()); }
  int m() const { return static_cast<int>(basis.size()); }
  bool constrained() const { return polytope.has_value(); }

  la::SymMatrix mixed_curvature(const SimplexWeights& w) const;  // sum alpha_j Q_j
  la::Vec mixed_linear(const SimplexWeights& w) const;           // sum alpha_j phi_j
};

/// Candidate member of the lifted KKT set: (x, alpha, mu, lambda) plus the
/// four residual norms of the optimality system.
struct KktPoint {
  la::Vec x;
  SimplexWeights alpha;
  la::Vec mu;      // inequality multipliers, length r
  la::Vec lambda;  // equality multipliers, length q

  struct Residuals {
    double stationarity = 0.0;
    double primal = 0.0;
    double complementarity = 0.0;
    double dual = 0.0;
    double max() const;
  };
  Residuals residuals;

  bool member(double tol = 1e-7) const { return residuals.max() <= tol; }
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks every instance invariant (dimensions, symmetry, curvature per mode,
/// Slater margin) and reports all violations; never mutates the instance.
ValidationReport validate(const ProblemInstance& instance);

/// Center form of a PD quadratic: x_f = -Q^{-1} phi.  Throws
/// SingularCurvature when Q has an eigenvalue below 1e-10.
QuadraticFunction to_center_form(const QuadraticFunction& f);

/// Constrained-mode repair: eigenvalues in [-1e-10, 0) are clamped to zero.
/// Throws SingularCurvature if some eigenvalue is below -1e-10.
QuadraticFunction psd_clamped(const QuadraticFunction& f);

/// Relative asymmetry max|Q - Q^T| / max(1, max|Q|) of a dense square input.
double relative_asymmetry(const la::Mat& Q);

struct SolverStageStats {
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  std::string status;
};

/// Combined outcome of the two bound procedures for one instance.
struct BoundsReport {
  double p_low = 0.0;
  double p_up = 0.0;
  SimplexWeights alpha_up;
  la::Vec x_up;
  bool rank1_certified = false;
  double singular_ratio = 0.0;
  std::optional<std::pair<la::Vec, SimplexWeights>> extracted;  // (x, alpha)
  SolverStageStats upper_stats;
  SolverStageStats lower_stats;
  bool upper_converged = false;
  bool lower_converged = false;
};

}  // namespace pgm
