#pragma once

// Internal conic solver covering the three problem classes the bounds need:
// linear feasibility/LP, convex QP over polyhedra and the simplex, and SDP
// with affine constraints.
//
// Programs are stated over a variable layout of free scalar blocks, one
// nonnegative scalar block and PSD blocks in packed upper-triangle storage
// (the densela index map):
//
//     minimize    (1/2) v_s^T H v_s + c^T v + c0
//     subject to  a_i^T v  = rhs_i          (equalities)
//                 g_k^T v <= rhs_k          (inequalities)
//                 v in  R^free x R_+^nonneg x S_+^{n_1} x ... x S_+^{n_B}
//
// where v_s is the scalar part and H is an optional PSD quadratic cost
// (absent for LP/SDP).  The solve is an over-relaxed two-block ADMM
// splitting: alternate projection onto the affine set through a cached
// factorization and onto the cone product through eigenvalue clamping.
// Scalar-only programs get a deterministic active-set polish at the end.

#include <optional>
#include <stdexcept>
#include <vector>

#include "pgm/core.hpp"
#include "pgm/densela.hpp"

namespace pgm::conic {

struct LinearTerm {
  int index = 0;
  double coeff = 0.0;
};

/// Sparse linear functional over the flat variable vector.
struct LinearFunctional {
  std::vector<LinearTerm> terms;

  void add(int index, double coeff) {
    if (coeff != 0.0) terms.push_back({index, coeff});
  }
  double eval(const la::Vec& v) const;
};

struct Constraint {
  LinearFunctional f;
  double rhs = 0.0;
};

struct VariableLayout {
  std::vector<int> free_sizes;
  int nonneg_size = 0;
  std::vector<int> psd_orders;

  int free_total() const;
  int scalar_count() const { return free_total() + nonneg_size; }
  int total_count() const;
  int free_offset(int block) const;
  int nonneg_offset() const { return free_total(); }
  int psd_offset(int block) const;
  /// Flat index of entry (i, j) of PSD block `block`.
  int psd_entry(int block, int i, int j) const {
    return psd_offset(block) + la::SymMatrix::packed_index(i, j, psd_orders[block]);
  }
};

struct QuadraticTerm {
  int i = 0, j = 0;
  double value = 0.0;  // coefficient of v_i * v_j in v^T H v (H symmetric)
};

struct ConicProgram {
  VariableLayout layout;
  LinearFunctional objective;
  double objective_constant = 0.0;
  /// Optional PSD quadratic objective over scalar variables, as symmetric
  /// triplets of H in (1/2) v^T H v.
  std::vector<QuadraticTerm> quadratic;
  std::vector<Constraint> equalities;
  std::vector<Constraint> inequalities;
};

enum class SolveStatus { Optimal, Infeasible, MaxIterations };

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 50000;
  double over_relaxation = 1.6;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::MaxIterations;
  la::Vec values;           // flat primal vector over the layout
  la::Vec equality_duals;   // lambda_i for  a_i^T v = rhs_i
  la::Vec inequality_duals; // mu_k >= 0 for g_k^T v <= rhs_k
  double objective = 0.0;
  double dual_objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  int iterations = 0;
  bool polished = false;
  /// Infeasibility certificate: weights nu over the stacked constraints
  /// (equalities then inequalities with slack) such that the combined row
  /// lies in the polar cone while b^T nu = certificate_support > 0, which is
  /// impossible for a feasible point.
  la::Vec certificate;
  double certificate_support = 0.0;

  la::SymMatrix psd_block(const VariableLayout& layout, int block) const;
};

struct LayoutError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Throws LayoutError if any functional references an undeclared variable or
/// the quadratic term leaves the scalar block.
void validate_program(const ConicProgram& program);

ConicSolution solve(const ConicProgram& program, const SolveOptions& options = {});

/// Exact Euclidean projection onto the probability simplex
/// (sort-and-threshold, finitely many operations).
SimplexWeights project_simplex(const la::Vec& v);

}  // namespace pgm::conic
