#include "pgm/conic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace pgm::conic {

namespace {
constexpr double kRoot2 = 1.4142135623730951;
}

double LinearFunctional::eval(const la::Vec& v) const {
  double s = 0.0;
  for (const auto& t : terms) s += t.coeff * v[t.index];
  return s;
}

int VariableLayout::free_total() const {
  int s = 0;
  for (int sz : free_sizes) s += sz;
  return s;
}

int VariableLayout::total_count() const {
  int s = scalar_count();
  for (int n : psd_orders) s += la::SymMatrix::packed_size(n);
  return s;
}

int VariableLayout::free_offset(int block) const {
  int s = 0;
  for (int b = 0; b < block; ++b) s += free_sizes[b];
  return s;
}

int VariableLayout::psd_offset(int block) const {
  int s = scalar_count();
  for (int b = 0; b < block; ++b) s += la::SymMatrix::packed_size(psd_orders[b]);
  return s;
}

la::SymMatrix ConicSolution::psd_block(const VariableLayout& layout, int block) const {
  const int n = layout.psd_orders[block];
  la::SymMatrix M(n);
  const int off = layout.psd_offset(block);
  for (int k = 0; k < la::SymMatrix::packed_size(n); ++k) M.packed[k] = values[off + k];
  return M;
}

void validate_program(const ConicProgram& program) {
  const int total = program.layout.total_count();
  const int scalars = program.layout.scalar_count();
  auto check_functional = [&](const LinearFunctional& f, const char* where) {
    for (const auto& t : f.terms) {
      if (t.index < 0 || t.index >= total)
        throw LayoutError(std::string("conic program references variable ") +
                          std::to_string(t.index) + " outside the layout in " + where);
    }
  };
  check_functional(program.objective, "the objective");
  for (const auto& c : program.equalities) check_functional(c.f, "an equality");
  for (const auto& c : program.inequalities) check_functional(c.f, "an inequality");
  for (const auto& q : program.quadratic) {
    if (q.i < 0 || q.i >= scalars || q.j < 0 || q.j >= scalars)
      throw LayoutError("quadratic objective term touches a non-scalar variable");
  }
  for (int n : program.layout.psd_orders) {
    if (n <= 0) throw LayoutError("PSD block with nonpositive order");
  }
  if (program.layout.nonneg_size < 0) throw LayoutError("negative nonneg block size");
}

namespace {

// Internal restatement of the program: caller coordinates carry one entry per
// packed upper-triangle position, while the ADMM iterates use sqrt(2)-scaled
// off-diagonals so that Euclidean projection of the packed vector is exactly
// the Frobenius projection of the matrix.  `droot[i]` is the factor taking a
// caller coordinate to its internal one; constraint and objective
// coefficients divide by it.  Inequality k picks up slack coordinate
// n_caller + k, turning all constraints into equalities over the cone
// product (free, nonneg, psd..., slack >= 0).
struct Assembled {
  const ConicProgram* prog = nullptr;
  int n_caller = 0;
  int n_scalar = 0;
  int n_free = 0;
  int n_eq = 0;
  int n_in = 0;
  int rows = 0;
  int N = 0;  // internal width: caller coords + slacks
  la::Vec droot;
  la::Mat Abar;  // rows x N, rows equilibrated to unit max-coefficient
  la::Vec bbar;
  la::Vec row_scale;  // caller row = row_scale[r] * stored row
  double b_caller_inf = 0.0;
  la::Vec cbar;  // length N
  la::SymMatrix H;  // scalar block quadratic cost, order n_scalar when present
  bool has_quad = false;
};

Assembled assemble(const ConicProgram& prog) {
  Assembled as;
  as.prog = &prog;
  as.n_caller = prog.layout.total_count();
  as.n_scalar = prog.layout.scalar_count();
  as.n_free = prog.layout.free_total();
  as.n_eq = static_cast<int>(prog.equalities.size());
  as.n_in = static_cast<int>(prog.inequalities.size());
  as.rows = as.n_eq + as.n_in;
  as.N = as.n_caller + as.n_in;

  as.droot.assign(as.n_caller, 1.0);
  for (int b = 0; b < static_cast<int>(prog.layout.psd_orders.size()); ++b) {
    const int n = prog.layout.psd_orders[b];
    const int off = prog.layout.psd_offset(b);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        as.droot[off + la::SymMatrix::packed_index(i, j, n)] = kRoot2;
  }

  as.Abar = la::Mat(as.rows, as.N);
  as.bbar.assign(as.rows, 0.0);
  for (int r = 0; r < as.n_eq; ++r) {
    for (const auto& t : prog.equalities[r].f.terms)
      as.Abar(r, t.index) += t.coeff / as.droot[t.index];
    as.bbar[r] = prog.equalities[r].rhs;
  }
  for (int k = 0; k < as.n_in; ++k) {
    const int r = as.n_eq + k;
    for (const auto& t : prog.inequalities[k].f.terms)
      as.Abar(r, t.index) += t.coeff / as.droot[t.index];
    as.Abar(r, as.n_caller + k) = 1.0;
    as.bbar[r] = prog.inequalities[k].rhs;
  }

  // Equilibrate: normalize each row's caller coefficients to unit max
  // magnitude (slack columns keep coefficient 1), which evens out the Schur
  // complement's spectrum when constraint rows mix very different scales.
  as.b_caller_inf = la::norm_inf(as.bbar);
  as.row_scale.assign(as.rows, 1.0);
  for (int r = 0; r < as.rows; ++r) {
    double nrm = 0.0;
    for (int i = 0; i < as.n_caller; ++i) nrm = std::max(nrm, std::abs(as.Abar(r, i)));
    if (nrm <= 0.0) continue;
    const double s = std::clamp(nrm, 1e-8, 1e8);
    as.row_scale[r] = s;
    for (int i = 0; i < as.n_caller; ++i) as.Abar(r, i) /= s;
    as.bbar[r] /= s;
  }

  as.cbar.assign(as.N, 0.0);
  for (const auto& t : prog.objective.terms) as.cbar[t.index] += t.coeff / as.droot[t.index];

  as.has_quad = !prog.quadratic.empty() && as.n_scalar > 0;
  if (as.has_quad) {
    as.H = la::SymMatrix(as.n_scalar);
    for (const auto& q : prog.quadratic) {
      const int i = std::min(q.i, q.j), j = std::max(q.i, q.j);
      as.H.add(i, j, q.value);
    }
  }
  return as;
}

// Cached factorizations for one value of the proximal diagonal shift (rho
// plus any tie-break weight): the scalar-block Cholesky of H + shift I, the
// columns T = P^{-1} Abar^T, and the regularized Schur complement
// S = Abar P^{-1} Abar^T + eps I.
struct Factors {
  double shift = 1.0;
  std::optional<la::SpdFactor> pfac;
  la::Mat T;
  la::SymMatrix S{0};
  std::optional<la::SpdFactor> sfac;

  void apply_pinv(const Assembled& as, const la::Vec& in, la::Vec& out) const {
    out.assign(as.N, 0.0);
    if (as.has_quad) {
      la::Vec head(in.begin(), in.begin() + as.n_scalar);
      la::Vec sol = pfac->solve(head);
      std::copy(sol.begin(), sol.end(), out.begin());
    } else {
      for (int i = 0; i < as.n_scalar; ++i) out[i] = in[i] / shift;
    }
    for (int i = as.n_scalar; i < as.N; ++i) out[i] = in[i] / shift;
  }

  void build(const Assembled& as, double shift_new) {
    shift = shift_new;
    if (as.has_quad) {
      la::SymMatrix P = as.H;
      for (int i = 0; i < as.n_scalar; ++i) P.add(i, i, shift);
      pfac.emplace(P);
    }
    if (as.rows == 0) return;
    T = la::Mat(as.N, as.rows);
    la::Vec arow(as.N), col(as.N);
    for (int r = 0; r < as.rows; ++r) {
      for (int i = 0; i < as.N; ++i) arow[i] = as.Abar(r, i);
      apply_pinv(as, arow, col);
      for (int i = 0; i < as.N; ++i) T(i, r) = col[i];
    }
    S = la::SymMatrix(as.rows);
    for (int r = 0; r < as.rows; ++r)
      for (int q = r; q < as.rows; ++q) {
        double s = 0.0;
        for (int i = 0; i < as.N; ++i) s += as.Abar(r, i) * T(i, q);
        S.set(r, q, s);
      }
    double maxdiag = 0.0;
    for (int r = 0; r < as.rows; ++r) maxdiag = std::max(maxdiag, S(r, r));
    const double eps = 1e-10 * (1.0 + maxdiag);
    la::SymMatrix Sreg = S;
    for (int r = 0; r < as.rows; ++r) Sreg.add(r, r, eps);
    sfac.emplace(Sreg);
  }

  la::Vec schur_solve(const la::Vec& g) const {
    la::Vec eta = sfac->solve(g);
    for (int pass = 0; pass < 2; ++pass) {
      la::Vec resid = la::symv(S, eta);
      for (int r = 0; r < static_cast<int>(g.size()); ++r) resid[r] = g[r] - resid[r];
      la::Vec corr = sfac->solve(resid);
      for (int r = 0; r < static_cast<int>(g.size()); ++r) eta[r] += corr[r];
    }
    return eta;
  }
};

// Euclidean projection of the internal iterate onto the cone product.
void project_cone(const Assembled& as, la::Vec& v) {
  const auto& lay = as.prog->layout;
  for (int i = as.n_free; i < as.n_scalar; ++i) v[i] = std::max(v[i], 0.0);
  for (int b = 0; b < static_cast<int>(lay.psd_orders.size()); ++b) {
    const int n = lay.psd_orders[b];
    const int off = lay.psd_offset(b);
    la::SymMatrix M(n);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        double val = v[off + la::SymMatrix::packed_index(i, j, n)];
        if (i != j) val /= kRoot2;
        M.set(i, j, val);
      }
    la::SymMatrix P = la::psd_project(M);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        double val = P(i, j);
        if (i != j) val *= kRoot2;
        v[off + la::SymMatrix::packed_index(i, j, n)] = val;
      }
  }
  for (int i = as.n_caller; i < as.N; ++i) v[i] = std::max(v[i], 0.0);
}

// Largest violation of membership of d in the polar cone (free parts must
// vanish, nonneg/slack parts must be <= 0, psd parts must be negative
// semidefinite).
double polar_violation(const Assembled& as, const la::Vec& d) {
  double viol = 0.0;
  for (int i = 0; i < as.n_free; ++i) viol = std::max(viol, std::abs(d[i]));
  for (int i = as.n_free; i < as.n_scalar; ++i) viol = std::max(viol, d[i]);
  const auto& lay = as.prog->layout;
  for (int b = 0; b < static_cast<int>(lay.psd_orders.size()); ++b) {
    const int n = lay.psd_orders[b];
    const int off = lay.psd_offset(b);
    la::SymMatrix M(n);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        double val = d[off + la::SymMatrix::packed_index(i, j, n)];
        if (i != j) val /= kRoot2;
        M.set(i, j, val);
      }
    la::EigDecomposition eig = la::eig_sym(M);
    viol = std::max(viol, eig.values.back());
  }
  for (int i = as.n_caller; i < as.N; ++i) viol = std::max(viol, d[i]);
  return viol;
}

double quad_value(const Assembled& as, const la::Vec& caller_values) {
  if (!as.has_quad) return 0.0;
  la::Vec head(caller_values.begin(), caller_values.begin() + as.n_scalar);
  la::Vec Hv = la::symv(as.H, head);
  return 0.5 * la::dot(head, Hv);
}

double primal_objective(const Assembled& as, const la::Vec& caller_values) {
  return as.prog->objective_constant + as.prog->objective.eval(caller_values) +
         quad_value(as, caller_values);
}

// KKT residual of a candidate (values, lambda, mu) in caller coordinates:
// the largest of primal feasibility, dual feasibility, complementary
// slackness, and stationarity violations.  Exactly zero at a KKT point, so
// it ranks the raw ADMM iterate against the polished candidate.
struct KktScore {
  double primal = 0.0;
  double stationarity = 0.0;
  double overall = 0.0;
};

KktScore kkt_score(const Assembled& as, const la::Vec& v, const la::Vec& lambda,
                   const la::Vec& mu) {
  const ConicProgram& prog = *as.prog;
  KktScore score;
  la::Vec stat(as.n_caller, 0.0);
  for (const auto& t : prog.objective.terms) stat[t.index] += t.coeff;
  if (as.has_quad) {
    la::Vec head(v.begin(), v.begin() + as.n_scalar);
    la::Vec Hv = la::symv(as.H, head);
    for (int i = 0; i < as.n_scalar; ++i) stat[i] += Hv[i];
  }
  for (int r = 0; r < as.n_eq; ++r) {
    const auto& c = prog.equalities[r];
    score.primal = std::max(score.primal, std::abs(c.f.eval(v) - c.rhs));
    for (const auto& t : c.f.terms) stat[t.index] += lambda[r] * t.coeff;
  }
  double dual_feas = 0.0, comp = 0.0;
  for (int k = 0; k < as.n_in; ++k) {
    const auto& c = prog.inequalities[k];
    const double gap = c.rhs - c.f.eval(v);
    score.primal = std::max(score.primal, std::max(0.0, -gap));
    dual_feas = std::max(dual_feas, -mu[k]);
    comp = std::max(comp, std::abs(mu[k] * gap));
    for (const auto& t : c.f.terms) stat[t.index] += mu[k] * t.coeff;
  }
  for (int i = 0; i < as.n_free; ++i)
    score.stationarity = std::max(score.stationarity, std::abs(stat[i]));
  for (int i = as.n_free; i < as.n_scalar; ++i) {
    score.primal = std::max(score.primal, -v[i]);
    score.stationarity = std::max(score.stationarity, -stat[i]);
    comp = std::max(comp, std::abs(stat[i] * v[i]));
  }
  score.overall = std::max({score.primal, score.stationarity, dual_feas, comp});
  return score;
}

// Deterministic refinement for scalar-only programs.  The active set is read
// off the converged slacks; the candidate then solves the corresponding
// equality-constrained problem exactly.  Quadratic objectives go through a
// Tikhonov-damped Schur complement on H; linear ones project the iterate
// onto the active face and recover multipliers by least squares.  The
// candidate replaces the ADMM point only if its KKT residual is no worse.
void polish_scalar(const Assembled& as, ConicSolution& sol, const la::Vec& slack) {
  const ConicProgram& prog = *as.prog;
  const int n = as.n_scalar;
  const double act_tol = 1e-7 * (1.0 + as.b_caller_inf);

  std::vector<int> active_in, active_nn;
  for (int k = 0; k < as.n_in; ++k)
    if (slack[k] * as.row_scale[as.n_eq + k] <= act_tol) active_in.push_back(k);
  for (int i = as.n_free; i < n; ++i)
    if (sol.values[i] <= act_tol) active_nn.push_back(i);

  const int m_act = as.n_eq + static_cast<int>(active_in.size()) +
                    static_cast<int>(active_nn.size());
  la::Mat C(m_act, n);
  la::Vec d(m_act, 0.0);
  int row = 0;
  for (int r = 0; r < as.n_eq; ++r, ++row) {
    for (const auto& t : prog.equalities[r].f.terms) C(row, t.index) += t.coeff;
    d[row] = prog.equalities[r].rhs;
  }
  for (int k : active_in) {
    for (const auto& t : prog.inequalities[k].f.terms) C(row, t.index) += t.coeff;
    d[row] = prog.inequalities[k].rhs;
    ++row;
  }
  for (int i : active_nn) {
    C(row, i) = 1.0;
    ++row;
  }

  la::Vec cvec(n, 0.0);
  for (const auto& t : prog.objective.terms) cvec[t.index] += t.coeff;

  la::Vec v_cand(n, 0.0), theta(m_act, 0.0);
  try {
    if (as.has_quad) {
      double hscale = 0.0;
      for (int i = 0; i < n; ++i) hscale = std::max(hscale, std::abs(as.H(i, i)));
      la::SymMatrix Hd = as.H;
      const double delta = 1e-11 * (1.0 + hscale);
      for (int i = 0; i < n; ++i) Hd.add(i, i, delta);
      la::SpdFactor hfac(Hd);
      la::Vec t = hfac.solve(la::scale(-1.0, cvec));
      la::Mat Tc(n, m_act);
      for (int r = 0; r < m_act; ++r) {
        la::Vec crow(n);
        for (int i = 0; i < n; ++i) crow[i] = C(r, i);
        la::Vec col = hfac.solve(crow);
        for (int i = 0; i < n; ++i) Tc(i, r) = col[i];
      }
      la::SymMatrix Sp(m_act);
      for (int r = 0; r < m_act; ++r)
        for (int q = r; q < m_act; ++q) {
          double s = 0.0;
          for (int i = 0; i < n; ++i) s += C(r, i) * Tc(i, q);
          Sp.set(r, q, s);
        }
      double maxdiag = 0.0;
      for (int r = 0; r < m_act; ++r) maxdiag = std::max(maxdiag, Sp(r, r));
      la::SymMatrix Sreg = Sp;
      for (int r = 0; r < m_act; ++r) Sreg.add(r, r, 1e-10 * (1.0 + maxdiag));
      la::SpdFactor sfac(Sreg);
      la::Vec g = la::matvec(C, t);
      for (int r = 0; r < m_act; ++r) g[r] -= d[r];
      theta = sfac.solve(g);
      for (int pass = 0; pass < 2; ++pass) {
        la::Vec resid = la::symv(Sp, theta);
        for (int r = 0; r < m_act; ++r) resid[r] = g[r] - resid[r];
        la::Vec corr = sfac.solve(resid);
        for (int r = 0; r < m_act; ++r) theta[r] += corr[r];
      }
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int r = 0; r < m_act; ++r) s += Tc(i, r) * theta[r];
        v_cand[i] = t[i] - s;
      }
    } else {
      // Pure LP: project the iterate onto the active face, then fit
      // multipliers to the stationarity equation by least squares.
      la::SymMatrix CC(m_act);
      for (int r = 0; r < m_act; ++r)
        for (int q = r; q < m_act; ++q) {
          double s = 0.0;
          for (int i = 0; i < n; ++i) s += C(r, i) * C(q, i);
          CC.set(r, q, s);
        }
      double maxdiag = 0.0;
      for (int r = 0; r < m_act; ++r) maxdiag = std::max(maxdiag, CC(r, r));
      la::SymMatrix CCreg = CC;
      for (int r = 0; r < m_act; ++r) CCreg.add(r, r, 1e-10 * (1.0 + maxdiag));
      la::SpdFactor ccfac(CCreg);
      auto cc_solve = [&](const la::Vec& g) {
        la::Vec x = ccfac.solve(g);
        for (int pass = 0; pass < 2; ++pass) {
          la::Vec resid = la::symv(CC, x);
          for (int r = 0; r < m_act; ++r) resid[r] = g[r] - resid[r];
          la::Vec corr = ccfac.solve(resid);
          for (int r = 0; r < m_act; ++r) x[r] += corr[r];
        }
        return x;
      };
      la::Vec z_head(sol.values.begin(), sol.values.begin() + n);
      la::Vec gap = la::matvec(C, z_head);
      for (int r = 0; r < m_act; ++r) gap[r] = d[r] - gap[r];
      la::Vec w = cc_solve(gap);
      v_cand = z_head;
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int r = 0; r < m_act; ++r) s += C(r, i) * w[r];
        v_cand[i] += s;
      }
      theta = cc_solve(la::matvec(C, la::scale(-1.0, cvec)));
    }
  } catch (const la::NotPositiveDefinite&) {
    return;  // degenerate active set; keep the ADMM point
  }

  la::Vec lam_cand(as.n_eq, 0.0), mu_cand(as.n_in, 0.0);
  for (int r = 0; r < as.n_eq; ++r) lam_cand[r] = theta[r];
  for (int j = 0; j < static_cast<int>(active_in.size()); ++j)
    mu_cand[active_in[j]] = theta[as.n_eq + j];

  KktScore before = kkt_score(as, sol.values, sol.equality_duals, sol.inequality_duals);
  KktScore after = kkt_score(as, v_cand, lam_cand, mu_cand);
  if (after.overall <= before.overall) {
    sol.values = v_cand;
    sol.equality_duals = lam_cand;
    sol.inequality_duals = mu_cand;
    sol.polished = true;
    sol.objective = primal_objective(as, v_cand);
    double bdual = 0.0;
    for (int r = 0; r < as.n_eq; ++r) bdual += as.bbar[r] * lam_cand[r];
    for (int k = 0; k < as.n_in; ++k) bdual += as.bbar[as.n_eq + k] * mu_cand[k];
    sol.dual_objective = as.prog->objective_constant - bdual - quad_value(as, v_cand);
    sol.gap = std::abs(sol.objective - sol.dual_objective) /
              (1.0 + std::max(std::abs(sol.objective), std::abs(sol.dual_objective)));
    sol.primal_residual = after.primal;
    sol.dual_residual = after.stationarity;
  }
}

// Face-restricted refinement for programs with PSD blocks, where the plain
// iteration can crawl once it is near a degenerate optimal face.  The primal
// blocks are parametrised as M_b = Y_b Y_b^T, the dual slack blocks as
// Z_b = U_b U_b^T, inequality slacks as sigma_k^2 and their multipliers as
// rho_k^2, so every candidate stays inside its cone by construction.  A
// damped Gauss-Newton iteration then solves the inequality-free optimality
// system
//     rows:        Abar v(scal, Y, sigma) = bbar
//     dual match:  zeta = cbar + H v + Abar^T eta equals 0 on free scalars,
//                  xi_i^2 on nonnegative scalars, U_b U_b^T on the blocks
//     products:    x_i xi_i = 0 and sigma_k rho_k = 0 (complementary
//                  slackness in factor form)
//     zero gap:    primal objective minus dual objective vanishes.
// Solutions of this system are exactly optimal pairs: primal feasibility,
// dual feasibility and a zero gap certify optimality with no explicit
// complementarity constraint on the blocks, whose bilinear coupling
// (Z_b Y_b = 0) is what defeats Newton steps at faces where strict
// complementarity degenerates.  The candidate is accepted only if it
// verifies primal feasibility, dual cone feasibility, and the duality gap
// at the caller's tolerance, so a failed refinement never weakens the
// solver's contract.
bool polish_psd(const Assembled& as, const la::Vec& z, const la::Vec& eta0, double tol,
                ConicSolution& sol) {
  const auto& lay = as.prog->layout;
  const int nb = static_cast<int>(lay.psd_orders.size());

  // --- primal factor seeds from the iterate's blocks ---
  std::vector<la::Mat> Y(nb);
  std::vector<int> rank(nb, 0);
  for (int b = 0; b < nb; ++b) {
    const int d = lay.psd_orders[b];
    const int off = lay.psd_offset(b);
    la::SymMatrix M(d);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        double val = z[off + la::SymMatrix::packed_index(i, j, d)];
        if (i != j) val /= kRoot2;
        M.set(i, j, val);
      }
    la::EigDecomposition eig = la::eig_sym(M);
    const double lmax = std::max(eig.values.back(), 0.0);
    // Keep even small face directions: on a flat optimal face the regular
    // points are the maximum-rank ones, and truncating a slowly-vanishing
    // eigenvalue pins the iteration at a strictly-degenerate boundary point.
    const double cut = std::max(1e-6 * lmax, 1e-12);
    int r = 0;
    for (double ev : eig.values)
      if (ev > cut) ++r;
    rank[b] = r;
    Y[b] = la::Mat(d, r);
    for (int k = 0; k < r; ++k) {
      const double s = std::sqrt(eig.values[d - r + k]);
      for (int i = 0; i < d; ++i) Y[b](i, k) = s * eig.vectors(i, d - r + k);
    }
  }

  // --- dual factor seeds from the iterate's multipliers ---
  // The dual slack estimate at the iterate; a generous rank cut only costs
  // unknowns, whereas missing a direction would make the dual match system
  // infeasible.
  la::Vec zeta_est(as.N, 0.0);
  for (int i = 0; i < as.N; ++i) zeta_est[i] = as.cbar[i];
  if (as.has_quad) {
    la::Vec head(z.begin(), z.begin() + as.n_scalar);
    la::Vec Hz = la::symv(as.H, head);
    for (int i = 0; i < as.n_scalar; ++i) zeta_est[i] += Hz[i];
  }
  for (int r = 0; r < as.rows; ++r) {
    if (eta0[r] == 0.0) continue;
    for (int i = 0; i < as.N; ++i) zeta_est[i] += as.Abar(r, i) * eta0[r];
  }
  std::vector<la::Mat> U(nb);
  std::vector<int> rank_u(nb, 0);
  for (int b = 0; b < nb; ++b) {
    const int d = lay.psd_orders[b];
    const int off = lay.psd_offset(b);
    la::SymMatrix Zm(d);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        double val = zeta_est[off + la::SymMatrix::packed_index(i, j, d)];
        if (i != j) val /= kRoot2;
        Zm.set(i, j, val);
      }
    la::EigDecomposition eig = la::eig_sym(Zm);
    const double lmax = std::max(eig.values.back(), 0.0);
    // The dual estimate carries noise at the iterate's accuracy, so only
    // directions clearly above it count; a spurious dual factor column
    // creates a dual-match residual nothing can remove.
    const double cut = std::max(1e-4 * lmax, 1e-12);
    int r = 0;
    for (double ev : eig.values)
      if (ev > cut) ++r;
    // Strict complementarity in factor form: the primal and dual ranks are
    // complementary, and the dual factor starts orthogonal to the primal one
    // so the product terms' contribution to the gap starts small.
    r = std::min(r, d - rank[b]);
    rank_u[b] = r;
    U[b] = la::Mat(d, r);
    for (int k = 0; k < r; ++k) {
      const double s = std::sqrt(eig.values[d - r + k]);
      for (int i = 0; i < d; ++i) U[b](i, k) = s * eig.vectors(i, d - r + k);
    }
    la::Mat Q = Y[b];
    for (int a = 0; a < rank[b]; ++a) {
      for (int p = 0; p < a; ++p) {
        double dp = 0.0;
        for (int i = 0; i < d; ++i) dp += Q(i, p) * Q(i, a);
        for (int i = 0; i < d; ++i) Q(i, a) -= dp * Q(i, p);
      }
      double nrm = 0.0;
      for (int i = 0; i < d; ++i) nrm += Q(i, a) * Q(i, a);
      nrm = std::sqrt(nrm);
      if (nrm > 1e-12)
        for (int i = 0; i < d; ++i) Q(i, a) /= nrm;
      else
        for (int i = 0; i < d; ++i) Q(i, a) = 0.0;
    }
    for (int k = 0; k < r; ++k)
      for (int a = 0; a < rank[b]; ++a) {
        double dp = 0.0;
        for (int i = 0; i < d; ++i) dp += Q(i, a) * U[b](i, k);
        for (int i = 0; i < d; ++i) U[b](i, k) -= dp * Q(i, a);
      }
  }

  // --- unknown layout ---
  const int ns = as.n_scalar;
  const int nw = as.n_in;
  const int nn = ns - as.n_free;
  int n_all = ns;
  std::vector<int> y_off(nb, 0);
  for (int b = 0; b < nb; ++b) {
    y_off[b] = n_all;
    n_all += lay.psd_orders[b] * rank[b];
  }
  const int slack_off = n_all;
  n_all += nw;
  const int etaeq_off = n_all;
  n_all += as.n_eq;
  const int rho_off = n_all;
  n_all += nw;
  const int xi_off = n_all;
  n_all += nn;
  std::vector<int> u_off(nb, 0);
  for (int b = 0; b < nb; ++b) {
    u_off[b] = n_all;
    n_all += lay.psd_orders[b] * rank_u[b];
  }
  const int n_primal = slack_off + nw;  // scal | Y | slck
  if (n_primal == 0) return false;

  // --- equation layout: rows | scalar duals | block duals | gap |
  //     scalar products ---
  int psd_dim = 0;
  std::vector<int> p_off(nb, 0);
  for (int b = 0; b < nb; ++b) {
    p_off[b] = psd_dim;
    psd_dim += lay.psd_orders[b] * (lay.psd_orders[b] + 1) / 2;
  }
  const int e_scal = as.rows;
  const int e_psd = e_scal + ns;
  const int e_gap = e_psd + psd_dim;
  const int e_xs = e_gap + 1;
  const int e_sr = e_xs + nn;
  const int m_all = e_sr + nw;

  la::Vec scal(ns, 0.0), slck(nw, 0.0), eta_eq(as.n_eq, 0.0), rho(nw, 0.0), xi(nn, 0.0);
  for (int i = 0; i < ns; ++i) scal[i] = z[i];
  for (int k = 0; k < nw; ++k) slck[k] = std::sqrt(std::max(z[as.n_caller + k], 0.0));
  for (int r = 0; r < as.n_eq; ++r) eta_eq[r] = eta0[r];
  for (int k = 0; k < nw; ++k) rho[k] = std::sqrt(std::max(eta0[as.n_eq + k], 0.0));
  for (int i = 0; i < nn; ++i) xi[i] = std::sqrt(std::max(zeta_est[as.n_free + i], 0.0));

  const double stat_tol = tol * (1.0 + la::norm_inf(as.cbar));
  // Product-row target: the products enter the duality gap quadratically,
  // so driving them to sqrt(tol)-level keeps their gap contribution below
  // the gap check's own threshold.
  const double orth_tol = 0.5 * std::sqrt(tol);

  la::Vec v(as.N, 0.0);
  la::Vec zeta(as.N, 0.0);
  la::Vec eta(as.rows, 0.0);
  auto assemble_point = [&]() {
    for (int i = 0; i < ns; ++i) v[i] = scal[i];
    for (int b = 0; b < nb; ++b) {
      const int d = lay.psd_orders[b];
      const int off = lay.psd_offset(b);
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
          double s = 0.0;
          for (int k = 0; k < rank[b]; ++k) s += Y[b](i, k) * Y[b](j, k);
          v[off + la::SymMatrix::packed_index(i, j, d)] = s * (i == j ? 1.0 : kRoot2);
        }
    }
    for (int k = 0; k < nw; ++k) v[as.n_caller + k] = slck[k] * slck[k];
    for (int r = 0; r < as.n_eq; ++r) eta[r] = eta_eq[r];
    for (int k = 0; k < nw; ++k) eta[as.n_eq + k] = rho[k] * rho[k];
    for (int i = 0; i < as.N; ++i) zeta[i] = as.cbar[i];
    if (as.has_quad) {
      la::Vec head(v.begin(), v.begin() + as.n_scalar);
      la::Vec Hv = la::symv(as.H, head);
      for (int i = 0; i < as.n_scalar; ++i) zeta[i] += Hv[i];
    }
    for (int r = 0; r < as.rows; ++r) {
      if (eta[r] == 0.0) continue;
      for (int i = 0; i < as.N; ++i) zeta[i] += as.Abar(r, i) * eta[r];
    }
  };

  // Residual of the optimality system; the merit scales each equation group
  // by its own acceptance threshold, so merit <= 1 means all groups pass.
  la::Vec F(m_all, 0.0);
  auto eval_sys = [&]() -> double {
    assemble_point();
    const la::Vec av = la::matvec(as.Abar, v);
    double worst_row = 0.0;
    for (int r = 0; r < as.rows; ++r) {
      F[r] = as.bbar[r] - av[r];
      const double rel = std::abs(F[r]) * as.row_scale[r] /
                         (1.0 + std::abs(as.bbar[r] * as.row_scale[r]));
      worst_row = std::max(worst_row, rel);
    }
    double worst_stat = 0.0;
    for (int i = 0; i < ns; ++i) {
      const double target = i < as.n_free ? 0.0 : xi[i - as.n_free] * xi[i - as.n_free];
      F[e_scal + i] = zeta[i] - target;
      worst_stat = std::max(worst_stat, std::abs(F[e_scal + i]));
    }
    for (int b = 0; b < nb; ++b) {
      const int d = lay.psd_orders[b];
      const int off = lay.psd_offset(b);
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
          double s = 0.0;
          for (int k = 0; k < rank_u[b]; ++k) s += U[b](i, k) * U[b](j, k);
          const int row = e_psd + p_off[b] + la::SymMatrix::packed_index(i, j, d);
          const int coord = off + la::SymMatrix::packed_index(i, j, d);
          F[row] = zeta[coord] - s * (i == j ? 1.0 : kRoot2);
          worst_stat = std::max(worst_stat, std::abs(F[row]));
        }
    }
    double head_quad = 0.0;
    if (as.has_quad) {
      la::Vec head(v.begin(), v.begin() + as.n_scalar);
      la::Vec Hv = la::symv(as.H, head);
      head_quad = la::dot(head, Hv);
    }
    double gap = la::dot(as.cbar, v) + head_quad + la::dot(as.bbar, eta);
    F[e_gap] = gap;
    double worst_orth = 0.0;
    for (int i = 0; i < nn; ++i) {
      F[e_xs + i] = scal[as.n_free + i] * xi[i];
      worst_orth = std::max(worst_orth, std::abs(F[e_xs + i]));
    }
    for (int k = 0; k < nw; ++k) {
      F[e_sr + k] = slck[k] * rho[k];
      worst_orth = std::max(worst_orth, std::abs(F[e_sr + k]));
    }
    const double pobj_abs = std::abs(as.prog->objective_constant + la::dot(as.cbar, v) +
                                     0.5 * head_quad);
    const double worst_gap = std::abs(gap) / (5.0 * tol * (1.0 + pobj_abs));
    return std::max({worst_row / (0.5 * tol), worst_stat / (0.5 * stat_tol), worst_gap,
                     worst_orth / orth_tol});
  };

  double merit = eval_sys();
  double lm = 1e-10;
  bool sys_ok = merit <= 1.0;
  // Damped Gauss-Newton.  Near degenerate faces the convergence is linear
  // rather than quadratic (the residual's bilinear terms leave a curvature
  // the linear model cannot see), so any meaningful decrease is accepted and
  // the iteration budget is generous; each step costs little next to the
  // main iteration.
  for (int gn = 0; gn < 60 && !sys_ok; ++gn) {
    // Jacobian.  v's dependence on (scal, Y, slck) follows the factor rule:
    // the direction dY(u,k) perturbs block b by e_u y_k^T + y_k e_u^T, with
    // the internal sqrt2 off-diagonal scaling folded in; likewise for U.
    la::Mat Jf(m_all, n_all);
    // rows over primal unknowns
    for (int r = 0; r < as.rows; ++r) {
      for (int i = 0; i < ns; ++i) Jf(r, i) = as.Abar(r, i);
      for (int k = 0; k < nw; ++k)
        Jf(r, slack_off + k) = (r == as.n_eq + k) ? 2.0 * slck[k] : 0.0;
    }
    for (int b = 0; b < nb; ++b) {
      const int d = lay.psd_orders[b];
      const int off = lay.psd_offset(b);
      for (int u = 0; u < d; ++u)
        for (int k = 0; k < rank[b]; ++k) {
          const int t = y_off[b] + u * rank[b] + k;
          for (int r = 0; r < as.rows; ++r) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
              const int i0 = std::min(u, j), j0 = std::max(u, j);
              const double a = as.Abar(r, off + la::SymMatrix::packed_index(i0, j0, d));
              s += a * ((u == j) ? 2.0 : kRoot2) * Y[b](j, k);
            }
            Jf(r, t) = s;
          }
        }
    }
    // scalar dual-match rows: zeta_i depends on scal through H and on the
    // multipliers; nonnegative rows subtract xi^2.
    for (int i = 0; i < ns; ++i) {
      const int row = e_scal + i;
      if (as.has_quad)
        for (int j = 0; j < ns; ++j) Jf(row, j) = -as.H(i, j);
      for (int r = 0; r < as.n_eq; ++r) Jf(row, etaeq_off + r) = -as.Abar(r, i);
      for (int k = 0; k < nw; ++k)
        Jf(row, rho_off + k) = -2.0 * rho[k] * as.Abar(as.n_eq + k, i);
      if (i >= as.n_free) Jf(row, xi_off + i - as.n_free) = 2.0 * xi[i - as.n_free];
    }
    // block dual-match rows
    for (int b = 0; b < nb; ++b) {
      const int d = lay.psd_orders[b];
      const int off = lay.psd_offset(b);
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
          const int row = e_psd + p_off[b] + la::SymMatrix::packed_index(i, j, d);
          const int coord = off + la::SymMatrix::packed_index(i, j, d);
          for (int r = 0; r < as.n_eq; ++r) Jf(row, etaeq_off + r) = -as.Abar(r, coord);
          for (int k = 0; k < nw; ++k)
            Jf(row, rho_off + k) = -2.0 * rho[k] * as.Abar(as.n_eq + k, coord);
          const double sc = (i == j) ? 1.0 : kRoot2;
          for (int k = 0; k < rank_u[b]; ++k) {
            Jf(row, u_off[b] + i * rank_u[b] + k) += sc * U[b](j, k);
            Jf(row, u_off[b] + j * rank_u[b] + k) += sc * U[b](i, k);
          }
        }
    }
    // gap row
    {
      la::Vec hterm(ns, 0.0);
      if (as.has_quad) {
        la::Vec head(v.begin(), v.begin() + as.n_scalar);
        hterm = la::symv(as.H, head);
      }
      for (int i = 0; i < ns; ++i) Jf(e_gap, i) = -(as.cbar[i] + 2.0 * hterm[i]);
      for (int b = 0; b < nb; ++b) {
        const int d = lay.psd_orders[b];
        const int off = lay.psd_offset(b);
        for (int u = 0; u < d; ++u)
          for (int k = 0; k < rank[b]; ++k) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
              const int i0 = std::min(u, j), j0 = std::max(u, j);
              s += as.cbar[off + la::SymMatrix::packed_index(i0, j0, d)] *
                   ((u == j) ? 2.0 : kRoot2) * Y[b](j, k);
            }
            Jf(e_gap, y_off[b] + u * rank[b] + k) = -s;
          }
      }
      for (int r = 0; r < as.n_eq; ++r) Jf(e_gap, etaeq_off + r) = -as.bbar[r];
      for (int k = 0; k < nw; ++k)
        Jf(e_gap, rho_off + k) = -2.0 * rho[k] * as.bbar[as.n_eq + k];
    }
    // product rows
    for (int i = 0; i < nn; ++i) {
      Jf(e_xs + i, as.n_free + i) = -xi[i];
      Jf(e_xs + i, xi_off + i) = -scal[as.n_free + i];
    }
    for (int k = 0; k < nw; ++k) {
      Jf(e_sr + k, slack_off + k) = -rho[k];
      Jf(e_sr + k, rho_off + k) = -slck[k];
    }

    la::SymMatrix G0(n_all);
    for (int a = 0; a < n_all; ++a)
      for (int c = a; c < n_all; ++c) {
        double s = 0.0;
        for (int r = 0; r < m_all; ++r) s += Jf(r, a) * Jf(r, c);
        G0.set(a, c, s);
      }
    double maxdiag = 0.0;
    for (int a = 0; a < n_all; ++a) maxdiag = std::max(maxdiag, G0(a, a));
    const la::Vec g = la::matvec_t(Jf, F);

    // Levenberg step: retry with stronger damping until the residual drops.
    const la::Vec scal_save = scal;
    const std::vector<la::Mat> Y_save = Y;
    const la::Vec slck_save = slck;
    const la::Vec etaeq_save = eta_eq;
    const la::Vec rho_save = rho;
    const la::Vec xi_save = xi;
    const std::vector<la::Mat> U_save = U;
    bool accepted = false;
    for (int attempt = 0; attempt < 8; ++attempt) {
      la::SymMatrix G = G0;
      const double delta = lm * (1.0 + maxdiag);
      for (int a = 0; a < n_all; ++a) G.add(a, a, delta);
      la::Vec step;
      try {
        la::SpdFactor gf(G);
        step = gf.solve(g);
        for (int pass = 0; pass < 2; ++pass) {
          la::Vec rr = la::matvec_t(Jf, la::matvec(Jf, step));
          for (int a = 0; a < n_all; ++a) rr[a] = g[a] - rr[a] - delta * step[a];
          la::Vec corr = gf.solve(rr);
          for (int a = 0; a < n_all; ++a) step[a] += corr[a];
        }
      } catch (const la::NotPositiveDefinite&) {
        lm *= 100.0;
        continue;
      }
      for (int i = 0; i < ns; ++i) scal[i] += step[i];
      for (int b = 0; b < nb; ++b) {
        const int d = lay.psd_orders[b];
        for (int u = 0; u < d; ++u) {
          for (int k = 0; k < rank[b]; ++k)
            Y[b](u, k) += step[y_off[b] + u * rank[b] + k];
          for (int k = 0; k < rank_u[b]; ++k)
            U[b](u, k) += step[u_off[b] + u * rank_u[b] + k];
        }
      }
      for (int k = 0; k < nw; ++k) slck[k] += step[slack_off + k];
      for (int r = 0; r < as.n_eq; ++r) eta_eq[r] += step[etaeq_off + r];
      for (int k = 0; k < nw; ++k) rho[k] += step[rho_off + k];
      for (int i = 0; i < nn; ++i) xi[i] += step[xi_off + i];
      const double merit_try = eval_sys();
      if (merit_try <= 1.0 || merit_try < merit * (1.0 - 1e-3)) {
        merit = merit_try;
        lm = std::max(lm * 0.3, 1e-12);
        accepted = true;
        break;
      }
      scal = scal_save;
      Y = Y_save;
      slck = slck_save;
      eta_eq = etaeq_save;
      rho = rho_save;
      xi = xi_save;
      U = U_save;
      lm *= 5.0;
    }
    if (!accepted) break;
    if (merit <= 1.0) sys_ok = true;
    // When the merit is still far off after the fast initial contraction,
    // the refinement floor is above the acceptance level and further
    // iterations only crawl; give the main iteration more time instead.
    if (gn >= 9 && merit > 100.0) break;
  }
  if (!sys_ok) return false;

  // Clamp stray negatives among nonnegative scalars and slacks, then verify
  // every row in caller units (equality form; slacks are part of the point).
  for (int i = as.n_free; i < ns; ++i) scal[i] = std::max(scal[i], 0.0);
  assemble_point();
  double worst_primal = 0.0;
  {
    const la::Vec av = la::matvec(as.Abar, v);
    for (int r = 0; r < as.rows; ++r) {
      const double caller_rhs = as.bbar[r] * as.row_scale[r];
      const double resid = std::abs(av[r] - as.bbar[r]) * as.row_scale[r];
      if (resid > tol * (1.0 + std::abs(caller_rhs))) return false;
      worst_primal = std::max(worst_primal, resid);
    }
  }

  // Dual verification: zeta lies in the dual cone.  The dual-match equations
  // hold to tolerance, so this mostly re-checks the clamps' effect.
  // The per-coordinate match residuals can accumulate into the block's
  // smallest eigenvalue, so the cone gate allows sqrt-of-dimension headroom;
  // the achieved violation is still reported in dual_residual.
  const double cone_tol = 2.0 * stat_tol;
  double worst_stat = 0.0;
  for (int i = 0; i < as.n_free; ++i)
    worst_stat = std::max(worst_stat, std::abs(zeta[i]));
  for (int i = as.n_free; i < as.n_scalar; ++i)
    worst_stat = std::max(worst_stat, -zeta[i]);
  if (worst_stat > cone_tol) return false;
  for (int b = 0; b < nb; ++b) {
    const int d = lay.psd_orders[b];
    const int off = lay.psd_offset(b);
    la::SymMatrix Z(d);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        double val = zeta[off + la::SymMatrix::packed_index(i, j, d)];
        if (i != j) val /= kRoot2;
        Z.set(i, j, val);
      }
    la::EigDecomposition eig = la::eig_sym(Z);
    worst_stat = std::max(worst_stat, -eig.values.front());
    if (worst_stat > cone_tol) return false;
  }

  // Gap check, then commit the candidate.
  la::Vec values(as.n_caller, 0.0);
  for (int i = 0; i < as.n_caller; ++i) values[i] = v[i] / as.droot[i];
  const double pobj = primal_objective(as, values);
  const double dobj =
      as.prog->objective_constant - la::dot(as.bbar, eta) - quad_value(as, values);
  if (std::abs(pobj - dobj) > 10.0 * tol * (1.0 + std::max(std::abs(pobj), std::abs(dobj))))
    return false;

  sol.values = values;
  sol.equality_duals.assign(as.n_eq, 0.0);
  for (int r = 0; r < as.n_eq; ++r) sol.equality_duals[r] = eta[r] / as.row_scale[r];
  sol.inequality_duals.assign(as.n_in, 0.0);
  for (int k = 0; k < as.n_in; ++k)
    sol.inequality_duals[k] = eta[as.n_eq + k] / as.row_scale[as.n_eq + k];
  sol.objective = pobj;
  sol.dual_objective = dobj;
  sol.gap = std::abs(pobj - dobj) / (1.0 + std::max(std::abs(pobj), std::abs(dobj)));
  sol.primal_residual = worst_primal;
  sol.dual_residual = worst_stat;
  sol.polished = true;
  return true;
}

}  // namespace

ConicSolution solve(const ConicProgram& program, const SolveOptions& options) {
  validate_program(program);
  Assembled as = assemble(program);
  ConicSolution sol;

  if (as.N == 0) {
    sol.status = SolveStatus::Optimal;
    sol.objective = sol.dual_objective = program.objective_constant;
    return sol;
  }

  la::Vec w(as.N, 0.0), z(as.N, 0.0), u(as.N, 0.0);
  la::Vec eta(as.rows, 0.0);
  la::Vec rhs(as.N), t(as.N), g(as.rows), znew(as.N);
  double rho = 1.0;
  Factors fac;
  fac.build(as, rho);
  la::Vec u_snap = u;
  std::optional<la::SpdFactor> cert_fac;
  la::SymMatrix AAt(0);
  const double phi = options.over_relaxation;

  bool converged = false;
  bool infeasible = false;
  bool polished_done = false;
  const bool has_psd = !program.layout.psd_orders.empty();
  const double polish_trigger = std::max(1e-4, 10.0 * options.tol);
  double polish_fail_level = std::numeric_limits<double>::infinity();
  int it = 0;
  double rnorm = 0.0, snorm = 0.0;

  while (it < options.max_iter) {
    ++it;
    for (int i = 0; i < as.N; ++i) rhs[i] = rho * (z[i] - u[i]) - as.cbar[i];
    fac.apply_pinv(as, rhs, t);
    if (as.rows > 0) {
      g = la::matvec(as.Abar, t);
      for (int r = 0; r < as.rows; ++r) g[r] -= as.bbar[r];
      eta = fac.schur_solve(g);
      for (int i = 0; i < as.N; ++i) {
        double s = 0.0;
        for (int r = 0; r < as.rows; ++r) s += fac.T(i, r) * eta[r];
        w[i] = t[i] - s;
      }
    } else {
      w = t;
    }

    for (int i = 0; i < as.N; ++i) znew[i] = phi * w[i] + (1.0 - phi) * z[i] + u[i];
    project_cone(as, znew);
    for (int i = 0; i < as.N; ++i) u[i] += phi * w[i] + (1.0 - phi) * z[i] - znew[i];

    double rr = 0.0, ss = 0.0, wn = 0.0, zn = 0.0, un = 0.0;
    for (int i = 0; i < as.N; ++i) {
      const double dr = w[i] - znew[i];
      const double ds = znew[i] - z[i];
      rr += dr * dr;
      ss += ds * ds;
      wn += w[i] * w[i];
      zn += znew[i] * znew[i];
      un += u[i] * u[i];
    }
    rnorm = std::sqrt(rr);
    snorm = rho * std::sqrt(ss);
    const double scale_pri = 1.0 + std::sqrt(std::max(wn, zn));
    const double scale_dua = 1.0 + rho * std::sqrt(un);
    z = znew;

    if (rnorm <= options.tol * scale_pri && snorm <= options.tol * scale_dua) {
      // The consensus residual is necessary but not row-wise; declare victory
      // only once each constraint meets its own tolerance at the cone point.
      bool strict_ok = true;
      if (as.rows > 0) {
        const la::Vec az = la::matvec(as.Abar, z);
        const double tau = options.tol * (1.0 + as.b_caller_inf);
        for (int r = 0; r < as.n_eq && strict_ok; ++r)
          if (std::abs(az[r] - as.bbar[r]) * as.row_scale[r] > tau) strict_ok = false;
        for (int k = 0; k < as.n_in && strict_ok; ++k) {
          const int r = as.n_eq + k;
          if ((az[r] - as.bbar[r] - z[as.n_caller + k]) * as.row_scale[r] > tau)
            strict_ok = false;
        }
      }
      if (strict_ok) {
        converged = true;
        // Prefer the face-polished point: higher precision and the
        // minimum-norm resolution of any flat optimal face.
        if (has_psd) polished_done = polish_psd(as, z, eta, options.tol, sol);
        break;
      }
    }

    // Degenerate faces make the tail crawl; once the iterate is near the
    // solution, try finishing with the face polish instead.  A failed
    // attempt usually means the iterate is still too coarse (the refinement
    // floor tracks the iterate's error), so the next attempt waits until the
    // consensus residual has dropped well below the failing level.
    if (has_psd && it % 1000 == 0 && rnorm <= polish_trigger * scale_pri &&
        snorm <= polish_trigger * scale_dua &&
        std::max(rnorm / scale_pri, snorm / scale_dua) < 0.5 * polish_fail_level) {
      if (polish_psd(as, z, eta, options.tol, sol)) {
        converged = true;
        polished_done = true;
        break;
      }
      polish_fail_level = std::max(rnorm / scale_pri, snorm / scale_dua);
    }

    if (it % 50 == 0) {
      if (it >= 500) {
        la::Vec d(as.N);
        double dn = 0.0;
        for (int i = 0; i < as.N; ++i) {
          d[i] = u[i] - u_snap[i];
          dn += d[i] * d[i];
        }
        dn = std::sqrt(dn);
        if (dn > 100.0 * options.tol * (1.0 + std::sqrt(un)) && as.rows > 0) {
          d = la::scale(1.0 / dn, d);
          if (polar_violation(as, d) <= 1e-6) {
            if (!cert_fac) {
              AAt = la::SymMatrix(as.rows);
              for (int r = 0; r < as.rows; ++r)
                for (int q = r; q < as.rows; ++q) {
                  double s = 0.0;
                  for (int i = 0; i < as.N; ++i) s += as.Abar(r, i) * as.Abar(q, i);
                  AAt.set(r, q, s);
                }
              double maxdiag = 0.0;
              for (int r = 0; r < as.rows; ++r) maxdiag = std::max(maxdiag, AAt(r, r));
              la::SymMatrix reg = AAt;
              for (int r = 0; r < as.rows; ++r) reg.add(r, r, 1e-10 * (1.0 + maxdiag));
              cert_fac.emplace(reg);
            }
            la::Vec Ad = la::matvec(as.Abar, d);
            la::Vec nu = cert_fac->solve(Ad);
            for (int pass = 0; pass < 2; ++pass) {
              la::Vec resid = la::symv(AAt, nu);
              for (int r = 0; r < as.rows; ++r) resid[r] = Ad[r] - resid[r];
              la::Vec corr = cert_fac->solve(resid);
              for (int r = 0; r < as.rows; ++r) nu[r] += corr[r];
            }
            la::Vec back = la::matvec_t(as.Abar, nu);
            double fit = 0.0;
            for (int i = 0; i < as.N; ++i) fit = std::max(fit, std::abs(back[i] - d[i]));
            const double support = la::dot(as.bbar, nu);
            if (fit <= 1e-6 && support >= 1e-7) {
              sol.certificate = nu;
              for (int r = 0; r < as.rows; ++r) sol.certificate[r] /= as.row_scale[r];
              sol.certificate_support = support;
              infeasible = true;
              break;
            }
          }
        }
      }
      const double rrel = rnorm / scale_pri;
      const double srel = snorm / scale_dua;
      double rho_new = rho;
      if (rrel > 10.0 * srel)
        rho_new = std::min(rho * 2.0, 1e6);
      else if (srel > 10.0 * rrel)
        rho_new = std::max(rho / 2.0, 1e-6);
      if (rho_new != rho) {
        u = la::scale(rho / rho_new, u);
        rho = rho_new;
        fac.build(as, rho);
      }
      u_snap = u;
    }
  }

  // Last-resort polish at the iteration cap: a verified face candidate is
  // still an optimality certificate.
  if (!converged && !infeasible && has_psd)
    polished_done = polish_psd(as, z, eta, options.tol, sol);
  if (polished_done) converged = true;

  sol.iterations = it;
  sol.status = infeasible ? SolveStatus::Infeasible
                          : (converged ? SolveStatus::Optimal : SolveStatus::MaxIterations);
  if (polished_done) return sol;
  sol.primal_residual = rnorm;
  sol.dual_residual = snorm;

  sol.values.assign(as.n_caller, 0.0);
  for (int i = 0; i < as.n_caller; ++i) sol.values[i] = z[i] / as.droot[i];
  // eta multiplies the equilibrated rows; caller-row duals divide by the
  // row scale (b^T eta is invariant, so the dual objective uses eta as-is).
  sol.equality_duals.assign(as.n_eq, 0.0);
  for (int r = 0; r < as.n_eq; ++r) sol.equality_duals[r] = eta[r] / as.row_scale[r];
  sol.inequality_duals.assign(as.n_in, 0.0);
  for (int k = 0; k < as.n_in; ++k)
    sol.inequality_duals[k] = eta[as.n_eq + k] / as.row_scale[as.n_eq + k];
  sol.objective = primal_objective(as, sol.values);
  sol.dual_objective = program.objective_constant - la::dot(as.bbar, eta) - quad_value(as, sol.values);
  sol.gap = std::abs(sol.objective - sol.dual_objective) /
            (1.0 + std::max(std::abs(sol.objective), std::abs(sol.dual_objective)));

  if (!infeasible && program.layout.psd_orders.empty() && as.rows + as.n_scalar > 0) {
    la::Vec slack(z.begin() + as.n_caller, z.end());
    polish_scalar(as, sol, slack);
  }
  return sol;
}

SimplexWeights project_simplex(const la::Vec& v) {
  if (v.empty()) throw std::invalid_argument("project_simplex: empty input");
  la::Vec sorted = v;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cum = 0.0, tau = 0.0;
  for (int i = 0; i < static_cast<int>(sorted.size()); ++i) {
    cum += sorted[i];
    const double candidate = (cum - 1.0) / (i + 1);
    if (sorted[i] - candidate > 0.0) tau = candidate;
  }
  SimplexWeights w;
  w.alpha.assign(v.size(), 0.0);
  double total = 0.0;
  for (int i = 0; i < static_cast<int>(v.size()); ++i) {
    w.alpha[i] = std::max(0.0, v[i] - tau);
    total += w.alpha[i];
  }
  if (total > 0.0) w.alpha = la::scale(1.0 / total, w.alpha);
  return w;
}

}  // namespace pgm::conic
