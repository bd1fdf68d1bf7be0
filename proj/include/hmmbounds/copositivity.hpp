#pragma once

#include <cmath>
#include <deque>
#include <optional>
#include <vector>

#include "types.hpp"

namespace hmmbounds {

// ---------------------------------------------------------------------------
// Copositivity of a symmetric matrix M on the probability simplex, decided
// (three-valued) by simplicial refinement: on a subsimplex with vertex matrix
// V, entrywise nonnegativity of V'MV is sufficient for pi'M pi >= 0 there,
// since pi = V lambda gives pi'M pi = lambda' (V'MV) lambda with lambda >= 0.
// ---------------------------------------------------------------------------

struct SimplicialCell {
  Matrix V;   // X x X, columns are simplex vertices
  int depth;  // number of bisections from the root
};

struct SimplicialPartition {
  std::vector<SimplicialCell> cells;

  // Single standard simplex with vertices e_1..e_X.
  static SimplicialPartition root(int X) {
    SimplicialPartition p;
    p.cells.push_back({Matrix::Identity(X, X), 0});
    return p;
  }
};

enum class CopositivityStatus { Certified, Refuted, Unknown };

struct CopositivityVerdict {
  CopositivityStatus status = CopositivityStatus::Unknown;
  double tol = 0.0;      // certification tolerance that was applied
  Vector witness;        // refuted only: point of the simplex
  double witness_value = 0.0;  // witness' M witness (< refutation threshold)
  SimplicialPartition certificate;  // cells inspected (all passing if certified)
  std::vector<double> cell_min;     // per-cell min entry of V'MV
  int max_depth_seen = 0;
  bool depth_exhausted = false;
  long long cells_processed = 0;
};

namespace detail {

inline double quad_form(const Matrix& M, const Vector& v) {
  return v.dot(M * v);
}

// Low-discrepancy points on the simplex: additive-recurrence sequence in the
// unit cube pushed through the exponential map and normalized.
inline std::vector<Vector> quasi_simplex_points(int X, int count) {
  static const int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31,
                               37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79,
                               83, 89, 97, 101, 103, 107, 109, 113, 127, 131,
                               137, 139, 149, 151, 157, 163, 167, 173, 179,
                               181, 191, 193, 197, 199, 211, 223, 227, 229,
                               233, 239, 241, 251, 257, 263, 269, 271, 277,
                               281, 283, 293, 307, 311};
  std::vector<double> alpha(X);
  for (int i = 0; i < X; ++i) {
    const double root = std::sqrt(static_cast<double>(primes[i % 64] + (i / 64)));
    alpha[i] = root - std::floor(root);
  }
  std::vector<Vector> pts;
  pts.reserve(count);
  for (int k = 1; k <= count; ++k) {
    Vector p(X);
    double s = 0;
    for (int i = 0; i < X; ++i) {
      double u = 0.5 + k * alpha[i];
      u -= std::floor(u);
      u = std::min(u, 1.0 - 1e-12);
      p[i] = -std::log1p(-u);
      s += p[i];
    }
    pts.push_back(p / s);
  }
  return pts;
}

}  // namespace detail

// Decide copositivity of M (symmetric within 1e-10). `tol` is the slack under
// which vertex-condition entries still certify; points are declared witnesses
// below -max(tol, 1e-12), so with the default tol the refutation threshold is
// the documented -1e-12. An optional starting partition lets callers seed the
// search with cells already known to matter (e.g. from the bound solver).
inline CopositivityVerdict copositivity_verdict(
    const Matrix& Min, int max_depth = 12, double tol = 1e-12,
    const SimplicialPartition* seed = nullptr) {
  const int X = static_cast<int>(Min.rows());
  if (Min.cols() != X) throw DimensionMismatch("copositivity: square matrix required");
  if ((Min - Min.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw InvalidBounds("copositivity: matrix not symmetric within 1e-10");
  const Matrix M = 0.5 * (Min + Min.transpose());

  CopositivityVerdict out;
  out.tol = tol;
  const double refute_thr = -std::max(tol, 1e-12);

  auto refute = [&](const Vector& p, double val) {
    out.status = CopositivityStatus::Refuted;
    out.witness = p / p.sum();
    out.witness_value = val;
  };

  // Cheap witness scan first: root vertices, root edge midpoints, and a
  // low-discrepancy sweep of the simplex interior.
  for (int i = 0; i < X; ++i)
    if (M(i, i) < refute_thr) {
      refute(Vector::Unit(X, i), M(i, i));
      return out;
    }
  for (int i = 0; i < X; ++i)
    for (int j = i + 1; j < X; ++j) {
      const double v = 0.25 * (M(i, i) + 2 * M(i, j) + M(j, j));
      if (v < refute_thr) {
        Vector p = Vector::Zero(X);
        p[i] = p[j] = 0.5;
        refute(p, v);
        return out;
      }
    }
  for (const Vector& p : detail::quasi_simplex_points(X, 512)) {
    const double v = detail::quad_form(M, p);
    if (v < refute_thr) {
      refute(p, v);
      return out;
    }
  }

  // Simplicial certification with longest-active-edge bisection.
  std::deque<SimplicialCell> work;
  if (seed) {
    for (const auto& c : seed->cells) work.push_back(c);
  } else {
    work.push_back({Matrix::Identity(X, X), 0});
  }
  constexpr long long kCellBudget = 200000;
  while (!work.empty()) {
    SimplicialCell cell = std::move(work.front());
    work.pop_front();
    ++out.cells_processed;
    out.max_depth_seen = std::max(out.max_depth_seen, cell.depth);
    if (out.cells_processed > kCellBudget) {
      out.depth_exhausted = true;
      break;
    }
    const Matrix N = cell.V.transpose() * M * cell.V;
    double minv = N.minCoeff();
    if (minv >= -tol) {
      out.certificate.cells.push_back(std::move(cell));
      out.cell_min.push_back(minv);
      continue;
    }
    // Vertex and midpoint values of this cell refute directly.
    int ea = -1, eb = -1;
    double longest = -1.0;
    for (int a = 0; a < X; ++a) {
      if (N(a, a) < refute_thr) {
        refute(cell.V.col(a), N(a, a));
        return out;
      }
      for (int b = a + 1; b < X; ++b) {
        const double mid = 0.25 * (N(a, a) + 2 * N(a, b) + N(b, b));
        if (mid < refute_thr) {
          refute(0.5 * (cell.V.col(a) + cell.V.col(b)), mid);
          return out;
        }
        if (N(a, b) < -tol) {
          const double len = (cell.V.col(a) - cell.V.col(b)).squaredNorm();
          if (len > longest) {
            longest = len;
            ea = a;
            eb = b;
          }
        }
      }
    }
    if (cell.depth >= max_depth || ea < 0) {
      out.depth_exhausted = true;
      out.certificate.cells.push_back(std::move(cell));
      out.cell_min.push_back(minv);
      continue;
    }
    const Vector mid = 0.5 * (cell.V.col(ea) + cell.V.col(eb));
    SimplicialCell left{cell.V, cell.depth + 1};
    left.V.col(ea) = mid;
    SimplicialCell right{std::move(cell.V), cell.depth + 1};
    right.V.col(eb) = mid;
    work.push_back(std::move(left));
    work.push_back(std::move(right));
  }
  out.status = out.depth_exhausted ? CopositivityStatus::Unknown
                                   : CopositivityStatus::Certified;
  return out;
}

// ---------------------------------------------------------------------------
// The ordering Q <= P of transition matrices: all the symmetric combinations
// M^(m)(Q, P) = Q_m P'_{m+1} + P_{m+1} Q'_m - P_m Q'_{m+1} - Q_{m+1} P'_m
// (columns m, m+1) must be copositive. The quadratic form expands to
// 2 [ (Q'pi)_m (P'pi)_{m+1} - (P'pi)_m (Q'pi)_{m+1} ], i.e. copositivity of
// the family says every predicted pair P'pi, Q'pi is MLR-ordered.
// ---------------------------------------------------------------------------
inline Matrix build_M(const Matrix& Q, const Matrix& P, int m) {
  if (Q.rows() != P.rows() || Q.cols() != P.cols() || P.rows() != P.cols())
    throw DimensionMismatch("build_M: equal square matrices required");
  if (m < 1 || m >= P.rows()) throw IndexOutOfRange("build_M: need 1 <= m <= X-1");
  const Vector qm = Q.col(m - 1), qm1 = Q.col(m);
  const Vector pm = P.col(m - 1), pm1 = P.col(m);
  // Grouped as D + D' so the result is bit-exactly symmetric and vanishes
  // exactly when Q == P (identical products cancel before any rounding).
  const Matrix D = qm * pm1.transpose() - pm * qm1.transpose();
  return D + D.transpose();
}

inline Matrix build_M(const TransitionMatrix& Q, const TransitionMatrix& P, int m) {
  return build_M(Q.dense(), P.dense(), m);
}

struct OrderVerdict {
  CopositivityStatus status = CopositivityStatus::Unknown;
  int refuted_m = 0;  // 1-based column index of the first refuted member
  std::vector<CopositivityVerdict> per_m;

  bool certified() const { return status == CopositivityStatus::Certified; }
};

// Aggregated verdict over the m = 1..X-1 family; the earliest refutation
// wins, any unknown (absent a refutation) makes the whole order unknown.
inline OrderVerdict copositive_order(const Matrix& Q, const Matrix& P,
                                     int max_depth = 12, double tol = 1e-12,
                                     const std::vector<SimplicialPartition>* seeds = nullptr) {
  if (Q.rows() != P.rows() || Q.cols() != P.cols() || P.rows() != P.cols())
    throw DimensionMismatch("copositive_order: equal square matrices required");
  OrderVerdict out;
  bool any_unknown = false;
  for (int m = 1; m < P.rows(); ++m) {
    const SimplicialPartition* seed =
        (seeds && static_cast<int>(seeds->size()) >= m) ? &(*seeds)[m - 1] : nullptr;
    CopositivityVerdict v =
        copositivity_verdict(build_M(Q, P, m), max_depth, tol, seed);
    const CopositivityStatus s = v.status;
    out.per_m.push_back(std::move(v));
    if (s == CopositivityStatus::Refuted) {
      out.status = CopositivityStatus::Refuted;
      out.refuted_m = m;
      return out;
    }
    if (s == CopositivityStatus::Unknown) any_unknown = true;
  }
  out.status = any_unknown ? CopositivityStatus::Unknown : CopositivityStatus::Certified;
  return out;
}

inline OrderVerdict copositive_order(const TransitionMatrix& Q,
                                     const TransitionMatrix& P,
                                     int max_depth = 12, double tol = 1e-12) {
  return copositive_order(Q.dense(), P.dense(), max_depth, tol);
}

}  // namespace hmmbounds
