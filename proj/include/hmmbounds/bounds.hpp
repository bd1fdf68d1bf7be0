#pragma once

// Construction of lower/upper transition-matrix bounds in the copositive
// dominance order:
//  * rank1_bounds: repeat the extreme rows (valid for TP2 matrices),
//  * lp_bounds: per-row l1-closest rows under linear ratio-dominance
//    constraints, solved exactly in a monotone-ratio parametrization,
//  * nuclear_norm_bound: reweighted nuclear-norm minimization subject to
//    simplicial copositivity constraints and a per-row l1 budget, solved by
//    a primal-dual splitting in weighted coordinates, then truncated,
//    re-certified, and packaged with its certificates.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "copositivity.hpp"
#include "errors.hpp"
#include "orders.hpp"
#include "projections.hpp"
#include "types.hpp"

namespace hmmbounds {

enum class BoundSide { Lower, Upper };

struct SolverConfig {
  double epsilon = 0.5;          // per-row budget ||P_i - Z_i||_1 <= epsilon
  double delta = 1e-4;           // reweighting regularizer
  int reweight_iters = 5;        // solves per simplicial iteration
  double simplicial_tol = 0.01;  // stop when the outer cost decays less
  int max_outer_iters = 12;      // cap on simplicial refinement rounds
  double inner_feas_tol = 1e-7;  // constraint violation target at exit
  double inner_obj_tol = 1e-6;   // relative objective plateau at exit
  int max_inner_iters = 20000;
  double trunc_threshold_rel = 1e-6;  // sigma_r <= rel * sigma_1 dropped
  double cop_margin = 1e-9;  // slack forced into the vertex constraints so
                             // the result certifies at tolerance 1e-12
  double l1_margin = 1e-6;   // radius shrink while solving (renormalization
                             // headroom for the returned matrix)
  int max_cert_depth = 12;   // refinement depth for attached certificates

  void validate() const {
    if (!(epsilon >= 0.0))
      throw std::invalid_argument("config: epsilon must be >= 0");
    if (!(delta > 0.0)) throw std::invalid_argument("config: delta must be > 0");
    if (reweight_iters < 1)
      throw std::invalid_argument("config: reweight_iters must be >= 1");
    if (!(simplicial_tol > 0.0))
      throw std::invalid_argument("config: simplicial_tol must be > 0");
    if (max_outer_iters < 1)
      throw std::invalid_argument("config: max_outer_iters must be >= 1");
    if (!(inner_feas_tol > 0.0))
      throw std::invalid_argument("config: inner_feas_tol must be > 0");
    if (!(inner_obj_tol > 0.0))
      throw std::invalid_argument("config: inner_obj_tol must be > 0");
    if (max_inner_iters < 1)
      throw std::invalid_argument("config: max_inner_iters must be >= 1");
    if (!(trunc_threshold_rel > 0.0) || !(trunc_threshold_rel < 1.0))
      throw std::invalid_argument("config: trunc_threshold_rel in (0,1)");
    if (!(cop_margin >= 0.0))
      throw std::invalid_argument("config: cop_margin must be >= 0");
    if (!(l1_margin >= 0.0))
      throw std::invalid_argument("config: l1_margin must be >= 0");
    if (max_cert_depth < 0)
      throw std::invalid_argument("config: max_cert_depth must be >= 0");
  }
};

struct PostProcessReport {
  int rank = 0;                     // numerical rank of the returned matrix
  double spectral_rel_error = 0.0;  // ||post - raw||_2 / ||raw||_2
  double min_entry_before = 0.0;    // most negative entry after truncation
  bool clipped = false;
  bool shifted = false;
};

struct SolveReport {
  int iterations = 0;
  double objective = 0.0;      // ||W1 Z W2||_* at exit
  double max_violation = 0.0;  // worst constraint violation at exit
  bool stalled = false;        // iteration cap hit before the tolerances
};

struct BoundReport {
  std::vector<double> outer_costs;  // cost recorded per simplicial iteration
  int outer_iterations = 0;
  long long total_inner_iterations = 0;
  bool any_stalled = false;
  bool fell_back_to_untruncated = false;
  PostProcessReport post;
};

// Count of singular values above rel_threshold * sigma_1.
inline int numerical_rank(const Matrix& m, double rel_threshold = 1e-6) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || !(s[0] > 0.0)) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > rel_threshold * s[0]) ++r;
  return r;
}

namespace detail {

inline Matrix sym_inverse(const Matrix& w) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(w);
  const Vector ev = es.eigenvalues().cwiseMax(1e-14);
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

inline Matrix inv_sqrt_psd(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  const Vector ev = es.eigenvalues().cwiseMax(1e-300);
  return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

inline void attach_svd_factors(TransitionMatrix& t, double rel_cut = 1e-12) {
  Eigen::JacobiSVD<Matrix> svd(t.dense(),
                               Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || !(s[0] > 0.0)) return;
  std::vector<TransitionFactor> f;
  for (Eigen::Index r = 0; r < s.size(); ++r)
    if (s[r] > rel_cut * s[0])
      f.push_back({s[r], svd.matrixU().col(r), svd.matrixV().col(r)});
  t.attach_factorization(std::move(f));
}

}  // namespace detail

// One reweighting step: from the current weights and iterate, build the next
// weight pair using the reduced factorization of W1 Zn W2.
inline std::pair<Matrix, Matrix> reweight_weights(const Matrix& w1,
                                                  const Matrix& w2,
                                                  const Matrix& zn,
                                                  double delta) {
  if (w1.rows() != zn.rows() || w2.rows() != zn.cols() ||
      w1.rows() != w1.cols() || w2.rows() != w2.cols())
    throw DimensionMismatch("reweight: weight/iterate size mismatch");
  if (!(delta > 0.0)) throw std::invalid_argument("reweight: delta must be > 0");
  const Matrix t = w1 * zn * w2;
  Eigen::JacobiSVD<Matrix> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Matrix w1i = detail::sym_inverse(w1);
  const Matrix w2i = detail::sym_inverse(w2);
  Matrix a1 = w1i * svd.matrixU() * svd.singularValues().asDiagonal() *
              svd.matrixU().transpose() * w1i;
  Matrix a2 = w2i * svd.matrixV() * svd.singularValues().asDiagonal() *
              svd.matrixV().transpose() * w2i;
  a1 = 0.5 * (a1 + a1.transpose());
  a2 = 0.5 * (a2 + a2.transpose());
  const Matrix eye = Matrix::Identity(w1.rows(), w1.cols());
  return {detail::inv_sqrt_psd(a1 + delta * eye),
          detail::inv_sqrt_psd(a2 + delta * eye)};
}

// One linear constraint <G, Z> >= margin from a vertex pair of a simplicial
// cell. G is supported on columns m and m+1 (1-based) and stored normalized
// to unit Frobenius norm; `norm` maps values back to raw quadratic-form
// units.
struct VertexConstraint {
  int m = 0;
  Vector gm, gm1;
  double margin = 0.0;
  double norm = 0.0;
};

inline double constraint_value(const VertexConstraint& c, const Matrix& z) {
  return c.gm.dot(z.col(c.m - 1)) + c.gm1.dot(z.col(c.m));
}

// Constraints demanding v_a' M^(m) v_b >= margin for every vertex pair of
// every cell of the per-m partitions, where M^(m) compares the variable
// against P on the chosen side. Identically-zero functionals are skipped:
// their true value is always zero and a positive margin would be vacuous to
// demand.
inline std::vector<VertexConstraint> assemble_constraints(
    const Matrix& p, BoundSide side,
    const std::vector<SimplicialPartition>& parts, double margin) {
  const int X = static_cast<int>(p.rows());
  if (static_cast<int>(parts.size()) != X - 1)
    throw DimensionMismatch("assemble_constraints: need X-1 partitions");
  std::vector<VertexConstraint> cons;
  for (int m = 1; m < X; ++m) {
    const Vector pm = p.col(m - 1);
    const Vector pm1 = p.col(m);
    for (const auto& cell : parts[m - 1].cells) {
      for (int a = 0; a < X; ++a) {
        const Vector va = cell.V.col(a);
        for (int b = a; b < X; ++b) {
          const Vector vb = cell.V.col(b);
          const double c1 = pm1.dot(vb), c2 = pm1.dot(va);
          const double c3 = pm.dot(va), c4 = pm.dot(vb);
          Vector gm = c1 * va + c2 * vb;
          Vector gm1 = -(c3 * vb + c4 * va);
          if (side == BoundSide::Upper) {
            gm = -gm;
            gm1 = -gm1;
          }
          const double nrm =
              std::sqrt(gm.squaredNorm() + gm1.squaredNorm());
          if (nrm < 1e-12) continue;
          cons.push_back({m, gm / nrm, gm1 / nrm, margin / nrm, nrm});
        }
      }
    }
  }
  return cons;
}

// Primal iterate plus dual variables carried between solves. The duals pair
// with unweighted quantities (the iterate Z and the constraint values), so
// they remain meaningful when the weights change; the weighted primal is
// rebuilt from `z` on entry.
struct InnerState {
  Matrix z;
  Matrix dual_rows;
  Vector lam;
  bool valid = false;
};

// Minimize ||W1 Z W2||_* over row-stochastic Z with per-row l1 radius around
// P's rows and the assembled linear constraints. Primal-dual splitting in
// Y = W1 Z W2 coordinates: the nuclear norm is handled by singular-value
// shrinkage, the row polytope and the halfspaces through their dual proxes.
inline Matrix inner_solve(const Matrix& p, const Matrix& w1, const Matrix& w2,
                          const std::vector<VertexConstraint>& cons,
                          double radius, const SolverConfig& cfg,
                          InnerState* state = nullptr,
                          SolveReport* report = nullptr) {
  const int X = static_cast<int>(p.rows());
  if (p.cols() != X) throw DimensionMismatch("inner_solve: square P required");
  if (!(radius >= 0.0))
    throw std::invalid_argument("inner_solve: negative radius");
  const Matrix w1i = detail::sym_inverse(w1);
  const Matrix w2i = detail::sym_inverse(w2);
  const std::size_t J = cons.size();

  auto apply_a = [&](const Matrix& z, Vector& out) {
    for (std::size_t j = 0; j < J; ++j)
      out[j] = constraint_value(cons[j], z);
  };
  auto add_at = [&](const Vector& lam, Matrix& acc) {
    for (std::size_t j = 0; j < J; ++j) {
      if (lam[j] == 0.0) continue;
      acc.col(cons[j].m - 1) += lam[j] * cons[j].gm;
      acc.col(cons[j].m) += lam[j] * cons[j].gm1;
    }
  };

  // Power iteration on K*K for the step sizes.
  std::mt19937_64 prng(0x5bd1e995u);
  std::normal_distribution<double> gk(0.0, 1.0);
  Matrix y(X, X);
  for (int i = 0; i < X; ++i)
    for (int j = 0; j < X; ++j) y(i, j) = gk(prng);
  y /= y.norm();
  Vector az = Vector::Zero(static_cast<Eigen::Index>(J));
  double lam_est = 1.0;
  for (int it = 0; it < 50; ++it) {
    const Matrix z = w1i * y * w2i;
    Matrix acc = z;
    if (J) {
      apply_a(z, az);
      add_at(az, acc);
    }
    const Matrix ynext = w1i * acc * w2i;
    lam_est = ynext.norm();
    if (!(lam_est > 0.0)) {
      lam_est = 1.0;
      break;
    }
    y = ynext / lam_est;
  }
  const double knorm = std::sqrt(lam_est) * 1.02;
  const double tau = 0.9 / knorm, sigma = 0.9 / knorm;

  // Feasibility resolution attainable by the splitting degrades with the
  // conditioning of the weight maps (suppressed directions move slowly in
  // weighted coordinates), so the exit target scales accordingly; the
  // truncation/repair stage downstream absorbs the residual.
  double cond2 = 1.0;
  {
    const Vector e1 = Eigen::SelfAdjointEigenSolver<Matrix>(w1).eigenvalues();
    const Vector e2 = Eigen::SelfAdjointEigenSolver<Matrix>(w2).eigenvalues();
    const double lo = std::max(e1.minCoeff() * e2.minCoeff(), 1e-14);
    const double hi = e1.maxCoeff() * e2.maxCoeff();
    cond2 = std::min((hi / lo) * (hi / lo), 1e8);
  }
  const double feas_target =
      std::min(1e-2, cfg.inner_feas_tol * std::max(1.0, cond2));

  const bool resume = state && state->valid && state->z.rows() == X;
  y = w1 * (resume ? state->z : p) * w2;
  Matrix dual_rows = (resume && state->dual_rows.rows() == X)
                         ? state->dual_rows
                         : Matrix::Zero(X, X);
  Vector lam =
      (resume && state->lam.size() == static_cast<Eigen::Index>(J))
          ? state->lam
          : Vector::Zero(static_cast<Eigen::Index>(J));
  Matrix ybar = y;
  double last_obj = std::numeric_limits<double>::infinity();
  double obj = 0.0;
  double feas = std::numeric_limits<double>::infinity();
  int plateau = 0;
  int iters_done = cfg.max_inner_iters;
  bool converged = false;
  for (int k = 1; k <= cfg.max_inner_iters; ++k) {
    const Matrix zbar = w1i * ybar * w2i;
    Matrix vd = dual_rows + sigma * zbar;
    for (int i = 0; i < X; ++i) {
      const Vector vi = vd.row(i).transpose() / sigma;
      const Vector pr =
          project_row_polytope(vi, p.row(i).transpose(), radius, 80, 1e-12);
      dual_rows.row(i) = vd.row(i) - sigma * pr.transpose();
    }
    if (J) {
      apply_a(zbar, az);
      for (std::size_t j = 0; j < J; ++j)
        lam[j] = std::min(lam[j] + sigma * (az[j] - cons[j].margin), 0.0);
    }
    Matrix acc = dual_rows;
    if (J) add_at(lam, acc);
    const Matrix t = y - tau * (w1i * acc * w2i);
    Eigen::JacobiSVD<Matrix> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector sh = (svd.singularValues().array() - tau).cwiseMax(0.0);
    const Matrix ynew =
        svd.matrixU() * sh.asDiagonal() * svd.matrixV().transpose();
    ybar = 2.0 * ynew - y;
    y = ynew;
    if (k % 25 == 0 || k == cfg.max_inner_iters) {
      obj = sh.sum();
      const Matrix z = w1i * y * w2i;
      feas = 0.0;
      for (int i = 0; i < X; ++i) {
        const auto row = z.row(i);
        feas = std::max(feas, std::abs(row.sum() - 1.0));
        feas = std::max(feas, std::max(0.0, -row.minCoeff()));
        feas = std::max(
            feas, (row - p.row(i)).cwiseAbs().sum() - radius);
      }
      if (J) {
        apply_a(z, az);
        for (std::size_t j = 0; j < J; ++j)
          feas = std::max(feas, cons[j].margin - az[j]);
      }
      if (std::abs(obj - last_obj) <=
          cfg.inner_obj_tol * std::max(1.0, std::abs(obj)))
        ++plateau;
      else
        plateau = 0;
      last_obj = obj;
      if (plateau >= 3 && k >= 100 && feas <= feas_target) {
        iters_done = k;
        converged = true;
        break;
      }
    }
  }
  if (report) {
    report->iterations = iters_done;
    report->objective = obj;
    report->max_violation = std::max(feas, 0.0);
    report->stalled = !converged;
  }
  Matrix z = w1i * y * w2i;
  if (state) {
    state->z = z;
    state->dual_rows = std::move(dual_rows);
    state->lam = std::move(lam);
    state->valid = true;
  }
  return z;
}

namespace detail {

// Cyclic projections with memory onto {rows feasible} and the margined
// halfspaces; halfspace memories reduce to scalars because the correction
// is always along the (unit-norm) constraint matrix.
inline Matrix polish_feasible(Matrix z, const Matrix& p, double radius,
                              const std::vector<VertexConstraint>& cons,
                              double target = 1e-11, int max_sweeps = 3000,
                              double* final_violation = nullptr) {
  const int X = static_cast<int>(p.rows());
  auto violation = [&](const Matrix& m) {
    double v = 0.0;
    for (int i = 0; i < X; ++i) {
      const auto row = m.row(i);
      v = std::max(v, std::abs(row.sum() - 1.0));
      v = std::max(v, std::max(0.0, -row.minCoeff()));
      v = std::max(v, (row - p.row(i)).cwiseAbs().sum() - radius);
    }
    for (const auto& c : cons)
      v = std::max(v, c.margin - constraint_value(c, m));
    return v;
  };
  for (int round = 0; round < 3; ++round) {
    if (violation(z) <= target) break;
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < cons.size(); ++j)
      if (constraint_value(cons[j], z) <= cons[j].margin + 1e-6)
        active.push_back(j);
    Matrix mem = Matrix::Zero(X, X);
    std::vector<double> theta(active.size(), 0.0);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      double delta = 0.0;
      for (int i = 0; i < X; ++i) {
        const Vector v = z.row(i).transpose() + mem.row(i).transpose();
        const Vector yv =
            project_row_polytope(v, p.row(i).transpose(), radius, 300, 1e-15);
        mem.row(i) = (v - yv).transpose();
        delta = std::max(delta,
                         (yv - z.row(i).transpose()).cwiseAbs().maxCoeff());
        z.row(i) = yv.transpose();
      }
      for (std::size_t t = 0; t < active.size(); ++t) {
        const auto& c = cons[active[t]];
        const double cz = constraint_value(c, z);
        const double cin = cz - theta[t];
        if (cin >= c.margin) {
          if (theta[t] != 0.0) {
            z.col(c.m - 1) -= theta[t] * c.gm;
            z.col(c.m) -= theta[t] * c.gm1;
            delta = std::max(delta, std::abs(theta[t]));
            theta[t] = 0.0;
          }
        } else {
          const double push = c.margin - cz;
          z.col(c.m - 1) += push * c.gm;
          z.col(c.m) += push * c.gm1;
          theta[t] = c.margin - cin;
          delta = std::max(delta, std::abs(push));
        }
      }
      if (delta < 1e-14) break;
    }
  }
  const double v = violation(z);
  if (final_violation) *final_violation = v;
  if (v > 1e-8)
    throw SolverStalled("bound polish could not reach feasibility");
  return z;
}

// Repair a rank-one candidate by projecting its (shared) row onto the
// feasible polytope in row space, which preserves rank one exactly; a
// matrix-space repair would re-inflate the trailing singular values by the
// size of the correction. Constraints that vanish identically on rank-one
// matrices are dropped: their value is exactly zero there and certifies as
// such. Returns nothing when the rank-one slice of the feasible set is
// empty (or out of Dykstra's reach).
inline std::optional<Vector> repair_rank1(
    const Vector& q0, const Matrix& p, double radius,
    const std::vector<VertexConstraint>& cons) {
  const int X = static_cast<int>(p.rows());
  struct Half {
    Vector a;
    double b;
  };  // a'q >= b
  std::vector<Half> hs;
  for (const auto& c : cons) {
    Vector a = Vector::Zero(X);
    a[c.m - 1] += c.gm.sum();
    a[c.m] += c.gm1.sum();
    if (a.cwiseAbs().maxCoeff() < 1e-12) continue;
    hs.push_back({std::move(a), c.margin});
  }
  // Only near-active halfspaces participate in the cyclic projections
  // (those with comfortable slack at the start cannot engage); the final
  // check below runs over the full list, so the filter cannot hide a
  // violation.
  std::vector<std::function<Vector(const Vector&)>> sets;
  sets.push_back([](const Vector& v) { return project_simplex(v); });
  for (int i = 0; i < X; ++i) {
    const Vector center = p.row(i).transpose();
    sets.push_back([center, radius](const Vector& v) {
      return project_l1_ball(v, center, radius);
    });
  }
  for (const auto& h : hs) {
    if (h.a.dot(q0) - h.b > 0.02 * std::max(1.0, h.a.norm())) continue;
    sets.push_back(
        [&h](const Vector& v) { return project_halfspace(v, -h.a, -h.b); });
  }
  const Vector q = dykstra(q0, sets, 20000, 1e-15);
  double viol = std::abs(q.sum() - 1.0);
  viol = std::max(viol, -std::min(0.0, q.minCoeff()));
  for (int i = 0; i < X; ++i)
    viol = std::max(viol,
                    (q - p.row(i).transpose()).cwiseAbs().sum() - radius);
  for (const auto& h : hs) viol = std::max(viol, h.b - h.a.dot(q));
  if (viol > 1e-10) return std::nullopt;
  return q;
}

// Split every cell sharing the longest near-active edge, independently per
// column pair m. Returns false when nothing was refined.
inline bool refine_partitions(std::vector<SimplicialPartition>& parts,
                              const Matrix& p, BoundSide side, const Matrix& z,
                              double margin, std::size_t cell_cap = 4000) {
  const int X = static_cast<int>(p.rows());
  bool any = false;
  for (int m = 1; m < X; ++m) {
    auto& part = parts[m - 1];
    if (part.cells.size() >= cell_cap) continue;
    const Matrix mm = (side == BoundSide::Lower) ? build_M(z, p, m)
                                                 : build_M(p, z, m);
    double max_abs = 0.0;
    for (const auto& cell : part.cells) {
      const Matrix n = cell.V.transpose() * mm * cell.V;
      max_abs = std::max(max_abs, n.cwiseAbs().maxCoeff());
    }
    const double act = margin + std::max(1e-7, 1e-5 * max_abs);
    double best_len = -1.0;
    Vector best_a, best_b;
    for (const auto& cell : part.cells) {
      const Matrix n = cell.V.transpose() * mm * cell.V;
      for (int a = 0; a < X; ++a)
        for (int b = a + 1; b < X; ++b) {
          if (n(a, b) > act) continue;
          const double len = (cell.V.col(a) - cell.V.col(b)).squaredNorm();
          if (len > best_len) {
            best_len = len;
            best_a = cell.V.col(a);
            best_b = cell.V.col(b);
          }
        }
    }
    if (best_len <= 1e-20) continue;
    const Vector mid = 0.5 * (best_a + best_b);
    std::vector<SimplicialCell> next;
    next.reserve(part.cells.size() + 4);
    for (auto& cell : part.cells) {
      int ia = -1, ib = -1;
      for (int a = 0; a < X; ++a) {
        if ((cell.V.col(a) - best_a).cwiseAbs().maxCoeff() <= 1e-14) ia = a;
        if ((cell.V.col(a) - best_b).cwiseAbs().maxCoeff() <= 1e-14) ib = a;
      }
      if (ia >= 0 && ib >= 0) {
        SimplicialCell left{cell.V, cell.depth + 1};
        left.V.col(ia) = mid;
        SimplicialCell right{std::move(cell.V), cell.depth + 1};
        right.V.col(ib) = mid;
        next.push_back(std::move(left));
        next.push_back(std::move(right));
        any = true;
      } else {
        next.push_back(std::move(cell));
      }
    }
    part.cells = std::move(next);
  }
  return any;
}

}  // namespace detail

// Truncate the singular spectrum at the configured relative threshold, clip
// or shift away negatives, renormalize rows, and verify the spectral error
// budget. Throws PostProcessDegraded when the budget cannot be met.
inline std::pair<TransitionMatrix, PostProcessReport> postprocess(
    const Matrix& raw, const SolverConfig& cfg) {
  PostProcessReport rep;
  Eigen::JacobiSVD<Matrix> svd(raw,
                               Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || !(s[0] > 0.0))
    throw PostProcessDegraded("postprocess: zero matrix");
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > cfg.trunc_threshold_rel * s[0]) ++r;
  r = std::max(r, 1);
  Matrix zt = svd.matrixU().leftCols(r) * s.head(r).asDiagonal() *
              svd.matrixV().leftCols(r).transpose();
  rep.min_entry_before = zt.minCoeff();
  if (rep.min_entry_before < 0.0) {
    if (rep.min_entry_before < -1e-6) {
      // Large negatives: shift the whole matrix, as clipping would distort
      // the spectrum more than the uniform rank-one shift does.
      zt.array() -= rep.min_entry_before;
      rep.shifted = true;
    } else {
      zt = zt.cwiseMax(0.0);
      rep.clipped = true;
    }
  }
  for (Eigen::Index i = 0; i < zt.rows(); ++i) {
    const double rs = zt.row(i).sum();
    if (!(rs > 0.0))
      throw PostProcessDegraded("postprocess: empty row after truncation");
    zt.row(i) /= rs;
  }
  rep.spectral_rel_error =
      Eigen::JacobiSVD<Matrix>(zt - raw).singularValues()[0] / s[0];
  if (rep.spectral_rel_error > 0.01)
    throw PostProcessDegraded("postprocess: spectral error budget exceeded");
  rep.rank = numerical_rank(zt, cfg.trunc_threshold_rel);
  TransitionMatrix t = TransitionMatrix::from_matrix(std::move(zt));
  detail::attach_svd_factors(t);
  return {std::move(t), rep};
}

struct NuclearBound {
  TransitionMatrix matrix;
  OrderVerdict certificate;
  BoundReport report;
  std::vector<SimplicialPartition> partitions;
};

namespace detail {

inline OrderVerdict certify_side(const Matrix& cand, const Matrix& p,
                                 BoundSide side, int depth, double tol,
                                 const std::vector<SimplicialPartition>* seeds) {
  return (side == BoundSide::Lower)
             ? copositive_order(cand, p, depth, tol, seeds)
             : copositive_order(p, cand, depth, tol, seeds);
}

inline double max_row_l1(const Matrix& a, const Matrix& b) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    v = std::max(v, (a.row(i) - b.row(i)).cwiseAbs().sum());
  return v;
}

}  // namespace detail

// Full pipeline for one side: simplicial outer loop around the reweighted
// nuclear-norm solves, feasibility polish, truncation, re-certification with
// fallback to the untruncated iterate.
inline NuclearBound nuclear_norm_bound(const TransitionMatrix& P,
                                       BoundSide side,
                                       const SolverConfig& cfg) {
  cfg.validate();
  const int X = P.size();
  if (X > 64)
    throw SizeCap("nuclear_norm_bound: supported up to 64 states; use "
                  "rank1_bounds or lp_bounds beyond that");
  const Matrix& pd = P.dense();

  NuclearBound out;
  if (cfg.epsilon == 0.0) {
    out.matrix = P;
    detail::attach_svd_factors(out.matrix);
    out.certificate =
        detail::certify_side(pd, pd, side, cfg.max_cert_depth, 1e-12, nullptr);
    out.report.outer_iterations = 0;
    out.report.outer_costs.push_back(
        Eigen::JacobiSVD<Matrix>(pd).singularValues().sum());
    out.report.post.rank = numerical_rank(pd, cfg.trunc_threshold_rel);
    out.partitions.assign(X - 1, SimplicialPartition{});
    for (auto& pt : out.partitions)
      pt.cells.push_back({Matrix::Identity(X, X), 0});
    return out;
  }

  const double radius =
      cfg.epsilon - std::min(cfg.l1_margin, 0.5 * cfg.epsilon);
  std::vector<SimplicialPartition> parts(X - 1);
  for (auto& pt : parts) pt.cells.push_back({Matrix::Identity(X, X), 0});

  Matrix z = pd;
  InnerState st;
  BoundReport rep;
  double prev_cost = std::numeric_limits<double>::infinity();
  std::vector<VertexConstraint> cons;
  for (int outer = 1; outer <= cfg.max_outer_iters; ++outer) {
    if (outer > 1) {
      if (!detail::refine_partitions(parts, pd, side, z, cfg.cop_margin))
        break;
    }
    cons = assemble_constraints(pd, side, parts, cfg.cop_margin);
    Matrix w1 = Matrix::Identity(X, X), w2 = Matrix::Identity(X, X);
    Matrix zn = pd;
    double cost = 0.0;
    for (int n = 0; n < cfg.reweight_iters; ++n) {
      SolveReport sr;
      Matrix znew = inner_solve(pd, w1, w2, cons, radius, cfg, &st, &sr);
      auto wn = reweight_weights(w1, w2, zn, cfg.delta);
      w1 = std::move(wn.first);
      w2 = std::move(wn.second);
      zn = znew;
      z = std::move(znew);
      cost = sr.objective;
      rep.total_inner_iterations += sr.iterations;
      rep.any_stalled = rep.any_stalled || sr.stalled;
    }
    rep.outer_costs.push_back(cost);
    rep.outer_iterations = outer;
    if (outer > 1 && prev_cost - cost <= cfg.simplicial_tol) break;
    prev_cost = cost;
  }
  if (cons.empty()) cons = assemble_constraints(pd, side, parts, cfg.cop_margin);

  // Feasibility repair; if the margined system is (structurally) infeasible,
  // retry without margins and certify at a looser-but-honest tolerance.
  double cert_tol = 1e-12;
  auto run_polish = [&](const Matrix& m) -> Matrix {
    try {
      return detail::polish_feasible(m, pd, radius, cons);
    } catch (const SolverStalled&) {
      if (cert_tol == 1e-12) {
        for (auto& c : cons) c.margin = 0.0;
        cert_tol = 1e-10;
        return detail::polish_feasible(m, pd, radius, cons);
      }
      throw;
    }
  };

  auto package = [&](Matrix m, bool fell_back,
                     const PostProcessReport* pp) -> bool {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) /= m.row(i).sum();
    if (detail::max_row_l1(m, pd) > cfg.epsilon + 1e-6) return false;
    OrderVerdict cert = detail::certify_side(m, pd, side, cfg.max_cert_depth,
                                             cert_tol, &parts);
    if (!cert.certified()) return false;
    TransitionMatrix t = TransitionMatrix::from_matrix(m);
    detail::attach_svd_factors(t);
    out.matrix = std::move(t);
    out.certificate = std::move(cert);
    rep.fell_back_to_untruncated = fell_back;
    if (pp)
      rep.post = *pp;
    else {
      rep.post = PostProcessReport{};
      rep.post.rank = numerical_rank(m, cfg.trunc_threshold_rel);
    }
    return true;
  };

  // Truncate the raw iterate first — row renormalization of a collapsed
  // iterate is rank-preserving — then repair feasibility; polishing before
  // truncation would re-inflate the trailing singular values with the
  // feasibility correction. The untruncated iterate, polished, is the
  // fallback when truncation or its repair cannot be certified.
  bool done = false;
  try {
    auto post = postprocess(z, cfg);
    Matrix repaired;
    bool rank1_fixed = false;
    if (post.second.rank == 1) {
      auto q = detail::repair_rank1(post.first.dense().row(0).transpose(),
                                    pd, radius, cons);
      if (q) {
        repaired = Vector::Ones(X) * q->transpose();
        rank1_fixed = true;
      }
    }
    if (!rank1_fixed) repaired = run_polish(post.first.dense());
    PostProcessReport pr = post.second;
    pr.rank = numerical_rank(repaired, cfg.trunc_threshold_rel);
    done = package(std::move(repaired), false, &pr);
  } catch (const PostProcessDegraded&) {
  } catch (const SolverStalled&) {
    if (cert_tol != 1e-12) throw;
  }
  if (!done) {
    if (!package(run_polish(z), true, nullptr))
      throw SolverStalled("nuclear bound could not be certified");
  }
  out.report = std::move(rep);
  out.partitions = std::move(parts);
  return out;
}

struct BoundPair {
  TransitionMatrix lower, upper;
  double epsilon = 0.0;
  int rank_lower = 0, rank_upper = 0;
  OrderVerdict cert_lower, cert_upper;
  BoundReport report_lower, report_upper;
};

// Shape, feasibility, certificate, and cheap necessary-order checks of a
// bound pair against its base matrix. Throws InvalidBounds on failure.
inline void validate_bound_pair(const BoundPair& bp,
                                const TransitionMatrix& P) {
  const int X = P.size();
  if (bp.lower.size() != X || bp.upper.size() != X)
    throw InvalidBounds("bound pair: size mismatch");
  if (!bp.cert_lower.certified() || !bp.cert_upper.certified())
    throw InvalidBounds("bound pair: certificates are not certified");
  if (detail::max_row_l1(bp.lower.dense(), P.dense()) > bp.epsilon + 1e-6)
    throw InvalidBounds("bound pair: lower rows exceed the l1 budget");
  if (detail::max_row_l1(bp.upper.dense(), P.dense()) > bp.epsilon + 1e-6)
    throw InvalidBounds("bound pair: upper rows exceed the l1 budget");
  // Spot-check the claimed order direction on cheap probe beliefs: the
  // uniform belief and every vertex. A certified order can never go below
  // small negative rounding on these.
  const Vector uni = Vector::Constant(X, 1.0 / X);
  for (int m = 1; m < X; ++m) {
    const Matrix ml = build_M(bp.lower.dense(), P.dense(), m);
    const Matrix mu = build_M(P.dense(), bp.upper.dense(), m);
    for (const Matrix* mm : {&ml, &mu}) {
      if (uni.dot(*mm * uni) < -1e-9)
        throw InvalidBounds("bound pair: order probe failed on a belief");
      for (int i = 0; i < X; ++i)
        if ((*mm)(i, i) < -1e-9)
          throw InvalidBounds("bound pair: order probe failed on a vertex");
    }
  }
}

// Both sides through the nuclear pipeline, packaged with certificates.
inline BoundPair nuclear_bounds(const TransitionMatrix& P,
                                const SolverConfig& cfg) {
  NuclearBound lo = nuclear_norm_bound(P, BoundSide::Lower, cfg);
  NuclearBound hi = nuclear_norm_bound(P, BoundSide::Upper, cfg);
  BoundPair bp;
  bp.lower = std::move(lo.matrix);
  bp.upper = std::move(hi.matrix);
  bp.epsilon = cfg.epsilon;
  bp.rank_lower = lo.report.post.rank;
  bp.rank_upper = hi.report.post.rank;
  bp.cert_lower = std::move(lo.certificate);
  bp.cert_upper = std::move(hi.certificate);
  bp.report_lower = std::move(lo.report);
  bp.report_upper = std::move(hi.report);
  return bp;
}

// Rank-one bounds: every row of the lower (upper) bound is the first (last)
// row of P. Valid whenever P is TP2.
inline BoundPair rank1_bounds(const TransitionMatrix& P) {
  const Matrix& pd = P.dense();
  const int X = P.size();
  if (!is_tp2(pd)) throw NotTP2("rank1_bounds: matrix is not TP2");
  Matrix lo(X, X), hi(X, X);
  for (int i = 0; i < X; ++i) {
    lo.row(i) = pd.row(0);
    hi.row(i) = pd.row(X - 1);
  }
  BoundPair bp;
  bp.lower = TransitionMatrix::from_matrix(lo);
  bp.upper = TransitionMatrix::from_matrix(hi);
  detail::attach_svd_factors(bp.lower);
  detail::attach_svd_factors(bp.upper);
  bp.epsilon = std::max(detail::max_row_l1(lo, pd),
                        detail::max_row_l1(hi, pd));
  bp.rank_lower = numerical_rank(lo);
  bp.rank_upper = numerical_rank(hi);
  bp.cert_lower = copositive_order(lo, pd);
  bp.cert_upper = copositive_order(pd, hi);
  return bp;
}

namespace detail {

// l1-closest probability row dominated by `base` in likelihood ratio.
// Parametrized as r = scale .* w with w nonincreasing over base's support,
// which makes the ratio constraint exact by construction. Coordinates ahead
// of the support are ratio-free; those after a positive base entry with
// base == 0 are forced to zero.
inline Vector fit_row_below(const Vector& target, const Vector& base) {
  const int X = static_cast<int>(base.size());
  int first_pos = -1;
  for (int i = 0; i < X; ++i)
    if (base[i] > 0.0) {
      first_pos = i;
      break;
    }
  if (first_pos < 0)
    throw std::invalid_argument("fit_row_below: base row has no mass");

  std::vector<int> vars;  // free coordinates then support coordinates
  for (int i = 0; i < first_pos; ++i) vars.push_back(i);
  const int supp_start = static_cast<int>(vars.size());
  for (int i = first_pos; i < X; ++i)
    if (base[i] > 0.0) vars.push_back(i);
  const int nv = static_cast<int>(vars.size());
  const int ns = nv - supp_start;

  Vector a(nv), c(nv);
  for (int j = 0; j < nv; ++j) {
    a[j] = target[vars[j]];
    c[j] = (j < supp_start) ? 1.0 : base[vars[j]];
  }

  auto project_c = [&](Vector v) {
    // {w_supp nonincreasing >= 0, w_free >= 0, c'w = 1} via cyclic
    // projections with memory.
    Vector mem1 = Vector::Zero(nv), mem2 = Vector::Zero(nv);
    for (int cycle = 0; cycle < 200; ++cycle) {
      double delta = 0.0;
      Vector in1 = v + mem1;
      Vector y1 = in1;
      for (int j = 0; j < supp_start; ++j) y1[j] = std::max(in1[j], 0.0);
      if (ns > 0)
        y1.tail(ns) = project_nonincreasing_nonneg(in1.tail(ns));
      mem1 = in1 - y1;
      delta = std::max(delta, (y1 - v).cwiseAbs().maxCoeff());
      v = y1;
      Vector in2 = v + mem2;
      Vector y2 = in2 - ((c.dot(in2) - 1.0) / c.squaredNorm()) * c;
      mem2 = in2 - y2;
      delta = std::max(delta, (y2 - v).cwiseAbs().maxCoeff());
      v = y2;
      if (delta < 1e-14) break;
    }
    return v;
  };

  const double rho = 1.0;
  Vector w = Vector::Zero(nv), zz = Vector::Zero(nv), u = Vector::Zero(nv);
  for (int j = supp_start; j < nv; ++j) w[j] = 1.0;  // r = base
  zz = w;
  for (int it = 0; it < 4000; ++it) {
    for (int j = 0; j < nv; ++j) {
      const double t = zz[j] - u[j];
      const double s = a[j] / c[j];
      const double th = c[j] / rho;
      w[j] = (t - s > th) ? t - th : ((t - s < -th) ? t + th : s);
    }
    const Vector zprev = zz;
    zz = project_c(w + u);
    u += w - zz;
    if ((w - zz).cwiseAbs().maxCoeff() < 1e-11 &&
        (zz - zprev).cwiseAbs().maxCoeff() < 1e-11)
      break;
  }
  // Exact cleanup: monotone cone membership by construction, then rescale.
  for (int j = 0; j < supp_start; ++j) zz[j] = std::max(zz[j], 0.0);
  if (ns > 0) zz.tail(ns) = project_nonincreasing_nonneg(zz.tail(ns));
  const double s = c.dot(zz);
  Vector r = Vector::Zero(X);
  if (s > 1e-300) {
    zz /= s;
    for (int j = 0; j < nv; ++j) r[vars[j]] = c[j] * zz[j];
  } else {
    r[first_pos] = 1.0;  // degenerate fit: point mass at the support start
  }
  const double rs = r.sum();
  if (rs > 0.0) r /= rs;
  return r;
}

inline Vector fit_row_above(const Vector& target, const Vector& base) {
  const Vector rt = target.reverse();
  const Vector rb = base.reverse();
  return fit_row_below(rt, rb).reverse();
}

}  // namespace detail

// Per-row l1-closest bounds whose rows are ratio-dominated by the first row
// (lower side) or dominate the last row (upper side). Valid for TP2 P.
inline BoundPair lp_bounds(const TransitionMatrix& P) {
  const Matrix& pd = P.dense();
  const int X = P.size();
  if (!is_tp2(pd)) throw NotTP2("lp_bounds: matrix is not TP2");
  const Vector base_lo = pd.row(0).transpose();
  const Vector base_hi = pd.row(X - 1).transpose();
  Matrix lo(X, X), hi(X, X);
  for (int i = 0; i < X; ++i) {
    lo.row(i) =
        detail::fit_row_below(pd.row(i).transpose(), base_lo).transpose();
    hi.row(i) =
        detail::fit_row_above(pd.row(i).transpose(), base_hi).transpose();
  }
  BoundPair bp;
  bp.lower = TransitionMatrix::from_matrix(lo);
  bp.upper = TransitionMatrix::from_matrix(hi);
  detail::attach_svd_factors(bp.lower);
  detail::attach_svd_factors(bp.upper);
  bp.epsilon = std::max(detail::max_row_l1(bp.lower.dense(), pd),
                        detail::max_row_l1(bp.upper.dense(), pd));
  bp.rank_lower = numerical_rank(bp.lower.dense());
  bp.rank_upper = numerical_rank(bp.upper.dense());
  bp.cert_lower = copositive_order(bp.lower.dense(), pd);
  bp.cert_upper = copositive_order(pd, bp.upper.dense());
  return bp;
}

}  // namespace hmmbounds
