#pragma once

// Dense linear algebra kernel for small symmetric problems (order <= ~60):
// packed symmetric storage, cyclic Jacobi eigendecomposition, Cholesky
// factorization, SPD solves and projection onto the PSD cone.

#include <stdexcept>
#include <string>
#include <vector>

namespace pgm::la {

using Vec = std::vector<double>;

struct NotPositiveDefinite : std::runtime_error {
  int pivot;
  NotPositiveDefinite(int pivot_, const std::string& msg)
      : std::runtime_error(msg), pivot(pivot_) {}
};

struct NoConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense row-major rectangular matrix.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  static Mat identity(int n);
  Mat transposed() const;
};

// Symmetric matrix in packed upper-triangle row-major storage.
//
// Entry (i, j) with 0 <= i <= j < order lives at
//     i*order - i*(i-1)/2 + (j - i),
// giving order*(order+1)/2 entries total.  This index map is the one fixed
// contract shared with the conic solver and the moment-matrix blocks; do not
// reorder it.
struct SymMatrix {
  int order = 0;
  Vec packed;

  SymMatrix() = default;
  explicit SymMatrix(int n, double fill = 0.0)
      : order(n), packed(static_cast<size_t>(n) * (n + 1) / 2, fill) {}

  static int packed_size(int n) { return n * (n + 1) / 2; }

  static int packed_index(int i, int j, int n) {
    if (i > j) std::swap(i, j);
    return i * n - i * (i - 1) / 2 + (j - i);
  }

  double operator()(int i, int j) const { return packed[packed_index(i, j, order)]; }
  void set(int i, int j, double v) { packed[packed_index(i, j, order)] = v; }
  void add(int i, int j, double v) { packed[packed_index(i, j, order)] += v; }

  static SymMatrix identity(int n);
  static SymMatrix diag(const Vec& d);
  /// Symmetric part (A + A^T)/2 of a square dense matrix.
  static SymMatrix from_dense_symmetrized(const Mat& A);

  Mat to_dense() const;
  double trace() const;
  double norm_inf() const;  // max |entry|
  double norm_fro() const;

  SymMatrix scaled(double s) const;
  SymMatrix plus(const SymMatrix& other, double weight = 1.0) const;
};

struct EigDecomposition {
  Vec values;   // ascending
  Mat vectors;  // columns are the matching orthonormal eigenvectors
};

/// Cyclic Jacobi on the full symmetric matrix.  Deterministic: fixed sweep
/// order, tie clusters sorted by eigenvector lexicographic order, sign fixed
/// so the largest-magnitude component of each vector is positive.
EigDecomposition eig_sym(const SymMatrix& A);

/// Lower-triangular L with L L^T = A.  Throws NotPositiveDefinite with the
/// failing pivot index.
Mat cholesky(const SymMatrix& A);

Vec solve_spd(const SymMatrix& A, const Vec& b);

/// Eigenvalue clamping onto the PSD cone: V diag(max(lambda,0)) V^T.
SymMatrix psd_project(const SymMatrix& A);

/// Cached Cholesky factorization for repeated right-hand sides.
class SpdFactor {
 public:
  explicit SpdFactor(const SymMatrix& A) : L_(cholesky(A)) {}
  Vec solve(const Vec& b) const;

 private:
  Mat L_;
};

// Small-vector plumbing used throughout the project.
double dot(const Vec& x, const Vec& y);
double norm2(const Vec& x);
double norm_inf(const Vec& x);
Vec axpy(double a, const Vec& x, const Vec& y);  // a*x + y
Vec scale(double a, const Vec& x);
Vec sub(const Vec& x, const Vec& y);  // x - y
Vec matvec(const Mat& A, const Vec& x);
Vec matvec_t(const Mat& A, const Vec& x);  // A^T x
Vec symv(const SymMatrix& A, const Vec& x);

}  // namespace pgm::la
