#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "pgm/bounds_lower.hpp"
#include "pgm/bounds_upper.hpp"
#include "pgm/conic.hpp"
#include "pgm/core.hpp"
#include "pgm/optima.hpp"
#include "pgm/rng.hpp"

using namespace pgm;

namespace {

SimplexWeights weights(la::Vec a) {
  SimplexWeights w;
  w.alpha = std::move(a);
  return w;
}

la::SymMatrix random_spd(Rng& rng, int n) {
  la::Mat B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = rng.gaussian();
  la::SymMatrix Q(n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double s = (i == j) ? 0.5 : 0.0;
      for (int k = 0; k < n; ++k) s += B(k, i) * B(k, j);
      Q.set(i, j, s);
    }
  return Q;
}

ProblemInstance random_instance(Rng& rng, int n, int m) {
  ProblemInstance inst;
  for (int j = 0; j < m; ++j) {
    la::Vec c(n);
    for (double& v : c) v = rng.gaussian();
    inst.basis.push_back(QuadraticFunction::from_center(random_spd(rng, n), c));
  }
  inst.y = la::Vec(n, 0.0);
  for (double& v : inst.y) v = rng.gaussian();
  return inst;
}

Polytope box2(double lo, double hi) {
  Polytope X;
  X.A = la::Mat(4, 2);
  X.A(0, 0) = 1.0;
  X.A(1, 0) = -1.0;
  X.A(2, 1) = 1.0;
  X.A(3, 1) = -1.0;
  X.b = {hi, -lo, hi, -lo};
  return X;
}

/// Caller-coordinate vector of the rank-1 lift v v^T plus free multipliers.
la::Vec lift_values(const conic::ConicProgram& prog, const la::Vec& lambda, const la::Vec& v) {
  const auto& L = prog.layout;
  la::Vec vals(L.total_count(), 0.0);
  for (size_t t = 0; t < lambda.size(); ++t) vals[t] = lambda[t];
  const int d = L.psd_orders[0];
  REQUIRE(static_cast<int>(v.size()) == d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) vals[L.psd_entry(0, i, j)] = v[i] * v[j];
  return vals;
}

/// Largest violation of the program's rows at the given caller values.
double worst_violation(const conic::ConicProgram& prog, const la::Vec& vals) {
  double worst = 0.0;
  for (const auto& c : prog.equalities)
    worst = std::max(worst, std::abs(c.f.eval(vals) - c.rhs) / (1.0 + std::abs(c.rhs)));
  for (const auto& c : prog.inequalities)
    worst = std::max(worst, (c.f.eval(vals) - c.rhs) / (1.0 + std::abs(c.rhs)));
  return worst;
}

la::SymMatrix outer(const la::Vec& v) {
  la::SymMatrix M(static_cast<int>(v.size()));
  for (int i = 0; i < M.order; ++i)
    for (int j = i; j < M.order; ++j) M.set(i, j, v[i] * v[j]);
  return M;
}

la::Vec concat1(const la::Vec& x, const la::Vec& a) {
  la::Vec v{1.0};
  v.insert(v.end(), x.begin(), x.end());
  v.insert(v.end(), a.begin(), a.end());
  return v;
}

}  // namespace

TEST_CASE("smallest unconstrained program has the documented shape") {
  ProblemInstance inst;
  inst.basis.push_back(QuadraticFunction::from_center(la::SymMatrix::identity(1), {2.0}));
  inst.y = {0.0};
  auto prog = bounds::assemble_unconstrained_lmi(inst);
  REQUIRE(prog.layout.psd_orders.size() == 1);
  CHECK(prog.layout.psd_orders[0] == 3);
  CHECK(prog.layout.free_total() == 0);
  // M11, simplex sum (= M_{1 alpha} alone), one stationarity row, one
  // alpha-row-sum cut; nonnegativity and the diagonal cut as inequalities.
  CHECK(prog.equalities.size() == 4);
  CHECK(prog.inequalities.size() == 2);
  conic::validate_program(prog);
}

TEST_CASE("constraint tally matches the closed-form count for n=2 m=3") {
  Rng rng(5);
  ProblemInstance inst = random_instance(rng, 2, 3);
  auto prog = bounds::assemble_unconstrained_lmi(inst);
  const int n = 2, m = 3;
  CHECK(static_cast<int>(prog.equalities.size()) == 2 + n + m);
  CHECK(static_cast<int>(prog.inequalities.size()) == 2 * m + 2 * m * (m - 1));
  conic::validate_program(prog);
}

TEST_CASE("constrained program dimensions track (n, m, q, r)") {
  Rng rng(15);
  ProblemInstance inst = random_instance(rng, 3, 3);
  Polytope X;
  X.A_eq = la::Mat(1, 3);
  X.A_eq(0, 0) = 1.0;
  X.b_eq = {0.1};
  X.A = la::Mat(4, 3);
  for (int k = 0; k < 4; ++k) X.A(k, k % 3) = (k < 2) ? 1.0 : -1.0;
  X.b = {1.0, 1.0, 1.0, 1.0};
  inst.polytope = X;
  auto prog = bounds::assemble_constrained_lmi(inst);
  CHECK(prog.layout.psd_orders[0] == 1 + 3 + 3 + 4);
  CHECK(prog.layout.free_total() == 1);
  conic::validate_program(prog);

  ProblemInstance tiny;
  tiny.basis.push_back(QuadraticFunction::from_linear(la::SymMatrix::identity(1), {0.0}));
  Polytope H;
  H.A = la::Mat(1, 1);
  H.A(0, 0) = -1.0;
  H.b = {-1.0};
  tiny.polytope = H;
  tiny.y = {0.0};
  auto small = bounds::assemble_constrained_lmi(tiny);
  CHECK(small.layout.psd_orders[0] == 4);
  // M11 + simplex sum + stationarity + complementarity + alpha row-sum cut.
  CHECK(small.equalities.size() == 5);
}

TEST_CASE("rank-1 lifts of true members satisfy every program row") {
  Rng rng(25);
  int tested = 0;
  for (int trial = 0; trial < 60; ++trial) {
    int n = rng.uniform_int(1, 3);
    int m = rng.uniform_int(1, 4);
    ProblemInstance inst = random_instance(rng, n, m);
    SimplexWeights alpha = weights(rng.dirichlet(m));
    la::Vec x = optima::kappa(inst, alpha);
    KktPoint p;
    p.x = x;
    p.alpha = alpha;
    if (optima::membership_residual(inst, p) > 1e-9) continue;
    auto prog = bounds::assemble_unconstrained_lmi(inst);
    la::Vec vals = lift_values(prog, {}, concat1(x, alpha.alpha));
    CHECK(worst_violation(prog, vals) <= 1e-8);
    ++tested;
  }
  CHECK(tested >= 50);
}

TEST_CASE("rank-1 lifts of constrained members satisfy every program row") {
  Rng rng(35);
  int tested = 0;
  for (int trial = 0; trial < 40; ++trial) {
    ProblemInstance inst = random_instance(rng, 2, 3);
    inst.polytope = box2(-0.6, 0.6);
    SimplexWeights alpha = weights(rng.dirichlet(3));
    auto [point, face] = optima::kappa_c(inst, alpha);
    if (optima::membership_residual(inst, point) > 1e-9) continue;
    auto prog = bounds::assemble_constrained_lmi(inst);
    la::Vec v = concat1(point.x, alpha.alpha);
    v.insert(v.end(), point.mu.begin(), point.mu.end());
    la::Vec vals = lift_values(prog, point.lambda, v);
    CHECK(worst_violation(prog, vals) <= 1e-8);
    ++tested;
  }
  CHECK(tested >= 25);
}

TEST_CASE("members get a vanishing lower bound") {
  Rng rng(45);
  for (int trial = 0; trial < 8; ++trial) {
    int n = rng.uniform_int(1, 3);
    int m = rng.uniform_int(1, 3);
    ProblemInstance inst = random_instance(rng, n, m);
    inst.y = optima::kappa(inst, weights(rng.dirichlet(m)));
    auto res = bounds::lower_bound(inst);
    REQUIRE(res.outcome == bounds::LowerOutcome::Bounded);
    CHECK(res.p_low >= 0.0);
    CHECK(res.p_low <= 1e-7);
  }
}

TEST_CASE("single-function relaxation is tight at the center distance") {
  Rng rng(55);
  for (int trial = 0; trial < 5; ++trial) {
    int n = rng.uniform_int(1, 3);
    ProblemInstance inst = random_instance(rng, n, 1);
    auto res = bounds::lower_bound(inst);
    REQUIRE(res.outcome == bounds::LowerOutcome::Bounded);
    la::Vec d = la::sub(inst.y, *inst.basis[0].center);
    CHECK(res.p_low == doctest::Approx(la::dot(d, d)).epsilon(1e-6));
  }
}

TEST_CASE("one-dimensional constrained bound reaches the hand value") {
  ProblemInstance inst;
  inst.basis.push_back(QuadraticFunction::from_linear(la::SymMatrix::identity(1), {0.0}));
  Polytope X;
  X.A = la::Mat(1, 1);
  X.A(0, 0) = -1.0;
  X.b = {-1.0};
  inst.polytope = X;
  inst.y = {0.0};
  auto res = bounds::lower_bound(inst);
  REQUIRE(res.outcome == bounds::LowerOutcome::Bounded);
  CHECK(res.p_low == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("the pair-product cap is met with equality at a half-half mixture") {
  Rng rng(65);
  ProblemInstance inst = random_instance(rng, 2, 3);
  SimplexWeights alpha = weights({0.5, 0.5, 0.0});
  la::Vec x = optima::kappa(inst, alpha);
  auto prog = bounds::assemble_unconstrained_lmi(inst);
  la::Vec vals = lift_values(prog, {}, concat1(x, alpha.alpha));
  // locate the cap row for the (alpha_1, alpha_2) product
  const int idx = prog.layout.psd_entry(0, 1 + 2 + 0, 1 + 2 + 1);
  int hits = 0;
  for (const auto& c : prog.inequalities) {
    if (c.rhs == 0.25 && c.f.terms.size() == 1 && c.f.terms[0].index == idx) {
      CHECK(c.f.eval(vals) == doctest::Approx(0.25).epsilon(1e-12));
      ++hits;
    }
  }
  CHECK(hits == 1);
}

TEST_CASE("dropping the enrichment rows never raises the bound") {
  Rng rng(75);
  for (int trial = 0; trial < 4; ++trial) {
    ProblemInstance inst = random_instance(rng, 2, 3);
    if (trial % 2 == 1) inst.polytope = box2(-0.7, 0.7);
    if (inst.constrained()) inst.y = {0.3, 0.2};  // keep y inside the box
    bounds::LmiOptions with;
    bounds::LmiOptions without;
    without.valid_cuts = false;
    auto a = bounds::lower_bound(inst, with);
    auto b = bounds::lower_bound(inst, without);
    REQUIRE(a.outcome == bounds::LowerOutcome::Bounded);
    REQUIRE(b.outcome == bounds::LowerOutcome::Bounded);
    CHECK(b.p_low <= a.p_low + 1e-7);
  }
}

TEST_CASE("certify_rank1 accepts exact lifts and rejects rank-2 mixtures") {
  Rng rng(85);
  ProblemInstance inst = random_instance(rng, 3, 3);
  SimplexWeights a1 = weights(rng.dirichlet(3));
  SimplexWeights a2 = weights({0.1, 0.1, 0.8});
  la::Vec v1 = concat1(optima::kappa(inst, a1), a1.alpha);
  la::Vec v2 = concat1(optima::kappa(inst, a2), a2.alpha);

  bounds::MomentMatrix M;
  M.n = 3;
  M.m = 3;
  M.values = outer(v1);
  auto cert = bounds::certify_rank1(M, inst);
  CHECK(cert.certified);
  CHECK(cert.singular_ratio <= 1e-10);
  for (int i = 0; i < 3; ++i)
    CHECK(cert.extracted_x[i] == doctest::Approx(v1[1 + i]).epsilon(1e-9));
  for (int j = 0; j < 3; ++j)
    CHECK(cert.extracted_alpha.alpha[j] == doctest::Approx(a1.alpha[j]).epsilon(1e-9));

  M.values = outer(v1).plus(outer(v2)).scaled(0.5);
  cert = bounds::certify_rank1(M, inst);
  CHECK_FALSE(cert.certified);
  CHECK(cert.singular_ratio > 1e-3);
}

TEST_CASE("lower bound never exceeds the upper bound") {
  Rng rng(95);
  for (int trial = 0; trial < 10; ++trial) {
    int n = rng.uniform_int(1, 3);
    int m = rng.uniform_int(1, 3);
    ProblemInstance inst = random_instance(rng, n, m);
    bounds::SearchOptions sopt;
    double p_up;
    if (trial % 2 == 1) {
      inst.polytope = box2(-0.8, 0.8);
      if (n == 1) {
        inst.polytope->A = la::Mat(2, 1);
        inst.polytope->A(0, 0) = 1.0;
        inst.polytope->A(1, 0) = -1.0;
        inst.polytope->b = {0.8, 0.8};
      } else if (n == 3) {
        inst.polytope->A = la::Mat(6, 3);
        for (int i = 0; i < 3; ++i) {
          inst.polytope->A(2 * i, i) = 1.0;
          inst.polytope->A(2 * i + 1, i) = -1.0;
        }
        inst.polytope->b = la::Vec(6, 0.8);
      }
      for (double& v : inst.y) v = std::min(std::max(v, -0.8), 0.8);
      sopt.grid_resolution = 0.2;
      p_up = bounds::upper_bound_constrained(inst, sopt).p_up;
    } else {
      p_up = bounds::upper_bound_unconstrained(inst, sopt).p_up;
    }
    auto low = bounds::lower_bound(inst);
    REQUIRE(low.outcome == bounds::LowerOutcome::Bounded);
    CHECK(low.p_low <= p_up + 1e-6 * (1.0 + p_up));
  }
}

TEST_CASE("certified solves report the extracted distance consistently") {
  Rng rng(105);
  int certified_seen = 0;
  for (int trial = 0; trial < 6; ++trial) {
    ProblemInstance inst = random_instance(rng, 2, 2);
    inst.y = optima::kappa(inst, weights(rng.dirichlet(2)));
    auto res = bounds::lower_bound(inst);
    REQUIRE(res.outcome == bounds::LowerOutcome::Bounded);
    if (!res.cert.certified) continue;
    ++certified_seen;
    la::Vec d = la::sub(inst.y, res.cert.extracted_x);
    CHECK(std::abs(res.p_low - la::dot(d, d)) <= 1e-6 * (1.0 + res.p_low));
  }
  CHECK(certified_seen >= 4);
}

TEST_CASE("an impossible polytope yields an infeasibility certificate") {
  ProblemInstance inst;
  inst.basis.push_back(QuadraticFunction::from_linear(la::SymMatrix::identity(1), {0.0}));
  Polytope X;  // x <= -1 and x >= 1 simultaneously
  X.A = la::Mat(2, 1);
  X.A(0, 0) = 1.0;
  X.A(1, 0) = -1.0;
  X.b = {-1.0, -1.0};
  inst.polytope = X;
  inst.y = {0.0};
  auto res = bounds::lower_bound(inst);
  CHECK(res.outcome == bounds::LowerOutcome::InfeasibleBasis);
  CHECK(res.certificate_support > 0.0);
  CHECK(!res.infeasibility_certificate.empty());
}

TEST_CASE("an iteration-starved solve raises SolverFailure") {
  Rng rng(115);
  ProblemInstance inst = random_instance(rng, 2, 2);
  bounds::LmiOptions opt;
  opt.solver.max_iter = 3;
  CHECK_THROWS_AS(bounds::lower_bound(inst, opt), SolverFailure);
}
