#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "pgm/conic.hpp"
#include "pgm/densela.hpp"
#include "pgm/rng.hpp"

using namespace pgm;
using conic::ConicProgram;
using conic::ConicSolution;
using conic::SolveStatus;

namespace {

// ---------------------------------------------------------------------------
// Exact-arithmetic LP oracle: enumerate all candidate vertices of
// {x | A x <= b} as solutions of n-row subsystems, keep the feasible ones,
// and take the exact objective minimum.  Small instances only.
// ---------------------------------------------------------------------------

int64_t gcd64(int64_t a, int64_t b) {
  a = a < 0 ? -a : a;
  b = b < 0 ? -b : b;
  while (b) {
    int64_t t = a % b;
    a = b;
    b = t;
  }
  return a == 0 ? 1 : a;
}

struct Fraction {
  int64_t num = 0;
  int64_t den = 1;

  Fraction() = default;
  Fraction(int64_t n) : num(n), den(1) {}
  Fraction(int64_t n, int64_t d) : num(n), den(d) { normalize(); }

  void normalize() {
    if (den < 0) {
      num = -num;
      den = -den;
    }
    int64_t g = gcd64(num, den);
    num /= g;
    den /= g;
  }
  Fraction operator+(const Fraction& o) const {
    return Fraction(num * o.den + o.num * den, den * o.den);
  }
  Fraction operator-(const Fraction& o) const {
    return Fraction(num * o.den - o.num * den, den * o.den);
  }
  Fraction operator*(const Fraction& o) const { return Fraction(num * o.num, den * o.den); }
  Fraction operator/(const Fraction& o) const { return Fraction(num * o.den, den * o.num); }
  bool operator==(const Fraction& o) const { return num == o.num && den == o.den; }
  bool operator<(const Fraction& o) const { return num * o.den < o.num * den; }
  bool operator<=(const Fraction& o) const { return num * o.den <= o.num * den; }
  bool is_zero() const { return num == 0; }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct RationalLp {
  int n = 0;
  std::vector<std::vector<Fraction>> A;  // rows of A x <= b
  std::vector<Fraction> b;
  std::vector<Fraction> c;  // minimize c^T x
};

// Solve the square subsystem exactly; nullopt when singular.
std::optional<std::vector<Fraction>> solve_square(std::vector<std::vector<Fraction>> M,
                                                  std::vector<Fraction> r) {
  const int n = static_cast<int>(r.size());
  for (int col = 0; col < n; ++col) {
    int piv = -1;
    for (int i = col; i < n; ++i)
      if (!M[i][col].is_zero()) {
        piv = i;
        break;
      }
    if (piv < 0) return std::nullopt;
    std::swap(M[col], M[piv]);
    std::swap(r[col], r[piv]);
    for (int i = col + 1; i < n; ++i) {
      if (M[i][col].is_zero()) continue;
      Fraction f = M[i][col] / M[col][col];
      for (int j = col; j < n; ++j) M[i][j] = M[i][j] - f * M[col][j];
      r[i] = r[i] - f * r[col];
    }
  }
  std::vector<Fraction> x(n);
  for (int i = n - 1; i >= 0; --i) {
    Fraction v = r[i];
    for (int j = i + 1; j < n; ++j) v = v - M[i][j] * x[j];
    x[i] = v / M[i][i];
  }
  return x;
}

struct OracleResult {
  bool feasible = false;
  Fraction objective;
  std::vector<Fraction> x;
};

OracleResult lp_vertex_oracle(const RationalLp& lp) {
  OracleResult best;
  const int rows = static_cast<int>(lp.b.size());
  std::vector<int> pick(lp.n);
  // iterate over all n-subsets of rows
  std::vector<int> idx(lp.n);
  std::iota(idx.begin(), idx.end(), 0);
  auto advance = [&]() {
    int k = lp.n - 1;
    while (k >= 0 && idx[k] == rows - lp.n + k) --k;
    if (k < 0) return false;
    ++idx[k];
    for (int j = k + 1; j < lp.n; ++j) idx[j] = idx[j - 1] + 1;
    return true;
  };
  if (rows < lp.n) return best;
  do {
    std::vector<std::vector<Fraction>> M(lp.n);
    std::vector<Fraction> r(lp.n);
    for (int i = 0; i < lp.n; ++i) {
      M[i] = lp.A[idx[i]];
      r[i] = lp.b[idx[i]];
    }
    auto x = solve_square(M, r);
    if (!x) continue;
    bool ok = true;
    for (int i = 0; i < rows && ok; ++i) {
      Fraction lhs(0);
      for (int j = 0; j < lp.n; ++j) lhs = lhs + lp.A[i][j] * (*x)[j];
      if (!(lhs <= lp.b[i])) ok = false;
    }
    if (!ok) continue;
    Fraction obj(0);
    for (int j = 0; j < lp.n; ++j) obj = obj + lp.c[j] * (*x)[j];
    if (!best.feasible || obj < best.objective) {
      best.feasible = true;
      best.objective = obj;
      best.x = *x;
    }
  } while (advance());
  return best;
}

ConicProgram lp_to_program(const RationalLp& lp) {
  ConicProgram prog;
  prog.layout.free_sizes = {lp.n};
  for (int j = 0; j < lp.n; ++j) prog.objective.add(j, lp.c[j].value());
  for (size_t i = 0; i < lp.b.size(); ++i) {
    conic::Constraint con;
    for (int j = 0; j < lp.n; ++j) con.f.add(j, lp.A[i][j].value());
    con.rhs = lp.b[i].value();
    prog.inequalities.push_back(con);
  }
  return prog;
}

// Directly assert the solution-contract residuals the solver promises.
void check_contract(const ConicProgram& prog, const ConicSolution& sol, double tol = 1e-8) {
  REQUIRE(sol.status == SolveStatus::Optimal);
  double rhs_inf = 0.0;
  for (const auto& c : prog.equalities) rhs_inf = std::max(rhs_inf, std::abs(c.rhs));
  for (const auto& c : prog.inequalities) rhs_inf = std::max(rhs_inf, std::abs(c.rhs));
  const double tau = 1.01 * tol * (1.0 + rhs_inf);
  for (const auto& c : prog.equalities) CHECK(std::abs(c.f.eval(sol.values) - c.rhs) <= tau);
  for (const auto& c : prog.inequalities) CHECK(c.f.eval(sol.values) - c.rhs <= tau);
  for (int b = 0; b < static_cast<int>(prog.layout.psd_orders.size()); ++b) {
    la::EigDecomposition e = la::eig_sym(sol.psd_block(prog.layout, b));
    CHECK(e.values.front() >= -1e-7);
  }
  const int nn0 = prog.layout.nonneg_offset();
  for (int i = 0; i < prog.layout.nonneg_size; ++i) CHECK(sol.values[nn0 + i] >= -tol);
  // weak duality within reporting tolerance
  CHECK(sol.objective >= sol.dual_objective - 1e-6 * (1.0 + std::abs(sol.objective)));
}

}  // namespace

TEST_CASE("LP: min x subject to x >= 1") {
  ConicProgram prog;
  prog.layout.free_sizes = {1};
  prog.objective.add(0, 1.0);
  conic::Constraint c;
  c.f.add(0, -1.0);
  c.rhs = -1.0;
  prog.inequalities.push_back(c);
  ConicSolution sol = conic::solve(prog);
  check_contract(prog, sol);
  CHECK(sol.values[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-7));
  // stationarity 1 - mu = 0
  CHECK(sol.inequality_duals[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("QP: coordinate projection of (2,0) onto x1 <= 1") {
  // ||x - (2,0)||^2 = x1^2 - 4 x1 + x2^2 + 4
  ConicProgram prog;
  prog.layout.free_sizes = {2};
  prog.quadratic.push_back({0, 0, 2.0});
  prog.quadratic.push_back({1, 1, 2.0});
  prog.objective.add(0, -4.0);
  prog.objective_constant = 4.0;
  conic::Constraint c;
  c.f.add(0, 1.0);
  c.rhs = 1.0;
  prog.inequalities.push_back(c);
  ConicSolution sol = conic::solve(prog);
  check_contract(prog, sol);
  CHECK(sol.values[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(sol.values[1] == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(sol.inequality_duals[0] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("SDP: min M11 subject to [[M11,1],[1,1]] PSD") {
  ConicProgram prog;
  prog.layout.psd_orders = {2};
  const int i01 = prog.layout.psd_entry(0, 0, 1);
  const int i11 = prog.layout.psd_entry(0, 1, 1);
  const int i00 = prog.layout.psd_entry(0, 0, 0);
  prog.objective.add(i00, 1.0);
  conic::Constraint fix_offdiag;
  fix_offdiag.f.add(i01, 1.0);
  fix_offdiag.rhs = 1.0;
  prog.equalities.push_back(fix_offdiag);
  conic::Constraint fix_corner;
  fix_corner.f.add(i11, 1.0);
  fix_corner.rhs = 1.0;
  prog.equalities.push_back(fix_corner);
  ConicSolution sol = conic::solve(prog);
  check_contract(prog, sol);
  CHECK(sol.values[i00] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("infeasible LP produces a certificate") {
  // x <= 0 and x >= 1 simultaneously
  ConicProgram prog;
  prog.layout.free_sizes = {1};
  prog.objective.add(0, 1.0);
  conic::Constraint c1, c2;
  c1.f.add(0, 1.0);
  c1.rhs = 0.0;
  c2.f.add(0, -1.0);
  c2.rhs = -1.0;
  prog.inequalities.push_back(c1);
  prog.inequalities.push_back(c2);
  ConicSolution sol = conic::solve(prog);
  REQUIRE(sol.status == SolveStatus::Infeasible);
  REQUIRE(sol.certificate.size() == 2);
  CHECK(sol.certificate_support >= 1e-7);
  // combined row must vanish on the free variable and be admissible on slacks
  const double nu1 = sol.certificate[0], nu2 = sol.certificate[1];
  CHECK(std::abs(nu1 * 1.0 + nu2 * (-1.0)) <= 1e-5);
  CHECK(nu1 <= 1e-6);
  CHECK(nu2 <= 1e-6);
  CHECK(0.0 * nu1 + (-1.0) * nu2 == doctest::Approx(sol.certificate_support).epsilon(1e-9));
}

TEST_CASE("simplex least squares hits zero residual exactly at an interior optimum") {
  // min ||alpha - (0.3, 0.7)||^2 over the simplex: optimum value 0
  ConicProgram prog;
  prog.layout.nonneg_size = 2;
  prog.quadratic.push_back({0, 0, 2.0});
  prog.quadratic.push_back({1, 1, 2.0});
  prog.objective.add(0, -0.6);
  prog.objective.add(1, -1.4);
  prog.objective_constant = 0.3 * 0.3 + 0.7 * 0.7;
  conic::Constraint sum;
  sum.f.add(0, 1.0);
  sum.f.add(1, 1.0);
  sum.rhs = 1.0;
  prog.equalities.push_back(sum);
  ConicSolution sol = conic::solve(prog);
  check_contract(prog, sol);
  CHECK(sol.values[0] == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(sol.values[1] == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(std::abs(sol.objective) <= 1e-10);
}

TEST_CASE("simplex least squares at a vertex optimum") {
  // min ||alpha - (2, 0)||^2 over the simplex -> alpha = (1, 0), value 1
  ConicProgram prog;
  prog.layout.nonneg_size = 2;
  prog.quadratic.push_back({0, 0, 2.0});
  prog.quadratic.push_back({1, 1, 2.0});
  prog.objective.add(0, -4.0);
  prog.objective_constant = 4.0;
  conic::Constraint sum;
  sum.f.add(0, 1.0);
  sum.f.add(1, 1.0);
  sum.rhs = 1.0;
  prog.equalities.push_back(sum);
  ConicSolution sol = conic::solve(prog);
  check_contract(prog, sol);
  CHECK(sol.values[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sol.values[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("solve agrees with the rational vertex-enumeration oracle") {
  Rng rng(77);
  int infeasible_seen = 0;
  for (int trial = 0; trial < 150; ++trial) {
    RationalLp lp;
    lp.n = rng.uniform_int(1, 3);
    // bounding box keeps every instance bounded
    for (int j = 0; j < lp.n; ++j) {
      std::vector<Fraction> row(lp.n, Fraction(0));
      row[j] = Fraction(1);
      lp.A.push_back(row);
      lp.b.push_back(Fraction(rng.uniform_int(1, 4)));
      for (auto& v : row) v = Fraction(0);
      row[j] = Fraction(-1);
      lp.A.push_back(row);
      lp.b.push_back(Fraction(rng.uniform_int(1, 4)));
    }
    const int extra = std::max(0, 6 - 2 * lp.n);
    for (int e = 0; e < extra; ++e) {
      std::vector<Fraction> row(lp.n);
      bool nonzero = false;
      for (int j = 0; j < lp.n; ++j) {
        int v = rng.uniform_int(-2, 2);
        row[j] = Fraction(v);
        nonzero = nonzero || v != 0;
      }
      if (!nonzero) row[0] = Fraction(1);
      lp.A.push_back(row);
      lp.b.push_back(Fraction(rng.uniform_int(-2, 4)));
    }
    lp.c.resize(lp.n);
    for (int j = 0; j < lp.n; ++j) lp.c[j] = Fraction(rng.uniform_int(-3, 3));

    OracleResult ref = lp_vertex_oracle(lp);
    ConicSolution sol = conic::solve(lp_to_program(lp));
    if (!ref.feasible) {
      ++infeasible_seen;
      CHECK(sol.status == SolveStatus::Infeasible);
      continue;
    }
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.objective == doctest::Approx(ref.objective.value()).epsilon(1e-6));
  }
  CHECK(infeasible_seen > 0);  // the corpus must exercise both outcomes
}

TEST_CASE("project_simplex examples") {
  SimplexWeights a = conic::project_simplex({0.2, 0.5, 0.3});
  CHECK(a.alpha[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(a.alpha[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(a.alpha[2] == doctest::Approx(0.3).epsilon(1e-12));

  SimplexWeights b = conic::project_simplex({2.0, 0.0});
  CHECK(b.alpha[0] == doctest::Approx(1.0));
  CHECK(b.alpha[1] == doctest::Approx(0.0));

  SimplexWeights c = conic::project_simplex({0.8, 0.4});
  CHECK(c.alpha[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(c.alpha[1] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("project_simplex satisfies the variational inequality") {
  Rng rng(88);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = rng.uniform_int(1, 6);
    la::Vec v(m);
    for (double& x : v) x = rng.uniform(-2.0, 2.0);
    SimplexWeights p = conic::project_simplex(v);
    CHECK(p.simplex_violation() <= 1e-12);
    for (int k = 0; k < 100; ++k) {
      la::Vec w = rng.dirichlet(m);
      double inner = 0.0;
      for (int i = 0; i < m; ++i) inner += (v[i] - p.alpha[i]) * (w[i] - p.alpha[i]);
      CHECK(inner <= 1e-10);
    }
  }
}

TEST_CASE("layout validation rejects out-of-range references") {
  ConicProgram prog;
  prog.layout.free_sizes = {1};
  prog.objective.add(3, 1.0);
  CHECK_THROWS_AS(conic::solve(prog), conic::LayoutError);
}
