#include "pgm/densela.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pgm::la {

Mat Mat::identity(int n) {
  Mat I(n, n);
  for (int i = 0; i < n; ++i) I(i, i) = 1.0;
  return I;
}

Mat Mat::transposed() const {
  Mat T(cols, rows);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) T(j, i) = (*this)(i, j);
  return T;
}

SymMatrix SymMatrix::identity(int n) {
  SymMatrix A(n);
  for (int i = 0; i < n; ++i) A.set(i, i, 1.0);
  return A;
}

SymMatrix SymMatrix::diag(const Vec& d) {
  SymMatrix A(static_cast<int>(d.size()));
  for (int i = 0; i < A.order; ++i) A.set(i, i, d[i]);
  return A;
}

SymMatrix SymMatrix::from_dense_symmetrized(const Mat& A) {
  SymMatrix S(A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = i; j < A.cols; ++j) S.set(i, j, 0.5 * (A(i, j) + A(j, i)));
  return S;
}

Mat SymMatrix::to_dense() const {
  Mat A(order, order);
  for (int i = 0; i < order; ++i)
    for (int j = 0; j < order; ++j) A(i, j) = (*this)(i, j);
  return A;
}

double SymMatrix::trace() const {
  double t = 0.0;
  for (int i = 0; i < order; ++i) t += (*this)(i, i);
  return t;
}

double SymMatrix::norm_inf() const {
  double m = 0.0;
  for (double v : packed) m = std::max(m, std::abs(v));
  return m;
}

double SymMatrix::norm_fro() const {
  double s = 0.0;
  for (int i = 0; i < order; ++i)
    for (int j = 0; j < order; ++j) {
      double v = (*this)(i, j);
      s += v * v;
    }
  return std::sqrt(s);
}

SymMatrix SymMatrix::scaled(double s) const {
  SymMatrix R = *this;
  for (double& v : R.packed) v *= s;
  return R;
}

SymMatrix SymMatrix::plus(const SymMatrix& other, double weight) const {
  SymMatrix R = *this;
  for (size_t k = 0; k < R.packed.size(); ++k) R.packed[k] += weight * other.packed[k];
  return R;
}

namespace {

double offdiag_fro(const Mat& A) {
  double s = 0.0;
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j)
      if (i != j) s += A(i, j) * A(i, j);
  return std::sqrt(s);
}

// Lexicographic comparison of eigenvector columns, used only to order tie
// clusters deterministically.
bool column_less(const Mat& V, int a, int b) {
  for (int i = 0; i < V.rows; ++i) {
    if (V(i, a) < V(i, b)) return true;
    if (V(i, a) > V(i, b)) return false;
  }
  return false;
}

}  // namespace

EigDecomposition eig_sym(const SymMatrix& S) {
  const int n = S.order;
  Mat A = S.to_dense();
  Mat V = Mat::identity(n);

  const double scale = std::max(S.norm_fro(), 1e-300);
  const int max_sweeps = 100;
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (offdiag_fro(A) <= 1e-12 * scale) {
      converged = true;
      break;
    }
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = A(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        // Rotate rows/cols p and q of A.
        for (int k = 0; k < n; ++k) {
          double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged && offdiag_fro(A) > 1e-12 * scale)
    throw NoConvergence("eig_sym: cyclic Jacobi did not converge in 100 sweeps");

  // Normalize signs: largest-magnitude component positive.
  for (int j = 0; j < n; ++j) {
    int imax = 0;
    for (int i = 1; i < n; ++i)
      if (std::abs(V(i, j)) > std::abs(V(imax, j))) imax = i;
    if (V(imax, j) < 0)
      for (int i = 0; i < n; ++i) V(i, j) = -V(i, j);
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (A(a, a) != A(b, b)) return A(a, a) < A(b, b);
    return column_less(V, a, b);
  });

  EigDecomposition out;
  out.values.resize(n);
  out.vectors = Mat(n, n);
  for (int j = 0; j < n; ++j) {
    out.values[j] = A(order[j], order[j]);
    for (int i = 0; i < n; ++i) out.vectors(i, j) = V(i, order[j]);
  }
  return out;
}

Mat cholesky(const SymMatrix& A) {
  const int n = A.order;
  Mat L(n, n);
  double max_diag = 0.0;
  for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(A(i, i)));
  const double pivot_floor = 1e-13 * std::max(max_diag, 1.0);
  for (int j = 0; j < n; ++j) {
    double d = A(j, j);
    for (int k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
    if (d <= pivot_floor)
      throw NotPositiveDefinite(j, "cholesky: nonpositive pivot at index " + std::to_string(j));
    L(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      double v = A(i, j);
      for (int k = 0; k < j; ++k) v -= L(i, k) * L(j, k);
      L(i, j) = v / L(j, j);
    }
  }
  return L;
}

Vec SpdFactor::solve(const Vec& b) const {
  const int n = L_.rows;
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    double v = b[i];
    for (int k = 0; k < i; ++k) v -= L_(i, k) * y[k];
    y[i] = v / L_(i, i);
  }
  Vec x(n);
  for (int i = n - 1; i >= 0; --i) {
    double v = y[i];
    for (int k = i + 1; k < n; ++k) v -= L_(k, i) * x[k];
    x[i] = v / L_(i, i);
  }
  return x;
}

Vec solve_spd(const SymMatrix& A, const Vec& b) { return SpdFactor(A).solve(b); }

SymMatrix psd_project(const SymMatrix& A) {
  EigDecomposition e = eig_sym(A);
  const int n = A.order;
  SymMatrix R(n);
  for (int k = 0; k < n; ++k) {
    double lam = e.values[k];
    if (lam <= 0.0) continue;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) R.add(i, j, lam * e.vectors(i, k) * e.vectors(j, k));
  }
  return R;
}

double dot(const Vec& x, const Vec& y) {
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm2(const Vec& x) { return std::sqrt(dot(x, x)); }

double norm_inf(const Vec& x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

Vec axpy(double a, const Vec& x, const Vec& y) {
  Vec r = y;
  for (size_t i = 0; i < x.size(); ++i) r[i] += a * x[i];
  return r;
}

Vec scale(double a, const Vec& x) {
  Vec r = x;
  for (double& v : r) v *= a;
  return r;
}

Vec sub(const Vec& x, const Vec& y) {
  Vec r = x;
  for (size_t i = 0; i < y.size(); ++i) r[i] -= y[i];
  return r;
}

Vec matvec(const Mat& A, const Vec& x) {
  Vec r(A.rows, 0.0);
  for (int i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < A.cols; ++j) s += A(i, j) * x[j];
    r[i] = s;
  }
  return r;
}

Vec matvec_t(const Mat& A, const Vec& x) {
  Vec r(A.cols, 0.0);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) r[j] += A(i, j) * x[i];
  return r;
}

Vec symv(const SymMatrix& A, const Vec& x) {
  Vec r(A.order, 0.0);
  for (int i = 0; i < A.order; ++i) {
    double s = 0.0;
    for (int j = 0; j < A.order; ++j) s += A(i, j) * x[j];
    r[i] = s;
  }
  return r;
}

}  // namespace pgm::la
