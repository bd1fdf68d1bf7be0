#pragma once

#include <algorithm>
#include <vector>

#include "indexing.hpp"
#include "types.hpp"

namespace hmmbounds {

inline constexpr double kOrderTol = 1e-12;

// Above this size the pairwise scans switch to the linear-time monotone-angle
// scan (exact for tol = 0; see note at mlr_geq).
inline constexpr int kPairScanCap = 512;

namespace detail {

// All-pairs likelihood-ratio cross products: requires
// hi(i) lo(j) <= lo(i) hi(j) + tol for every i < j.
inline bool mlr_cross_full(const Vector& hi, const Vector& lo, double tol) {
  const Eigen::Index n = hi.size();
  for (Eigen::Index i = 0; i + 1 < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (hi[i] * lo[j] > lo[i] * hi[j] + tol) return false;
  return true;
}

// Linear scan: treating w_k = (lo(k), hi(k)) as points in the closed first
// quadrant, the all-pairs condition says their angles are nondecreasing.
// Checking consecutive pairs after dropping (0,0) points is equivalent when
// tol = 0 (pairs with a zero point are satisfied identically), and within
// rounding of the full scan otherwise.
inline bool mlr_cross_fast(const Vector& hi, const Vector& lo, double tol) {
  const Eigen::Index n = hi.size();
  Eigen::Index prev = -1;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (hi[k] == 0.0 && lo[k] == 0.0) continue;
    if (prev >= 0 && hi[prev] * lo[k] > lo[prev] * hi[k] + tol) return false;
    prev = k;
  }
  return true;
}

inline bool mlr_cross(const Vector& hi, const Vector& lo, double tol) {
  return hi.size() <= kPairScanCap ? mlr_cross_full(hi, lo, tol)
                                   : mlr_cross_fast(hi, lo, tol);
}

}  // namespace detail

// Monotone likelihood ratio order: p1 >=_r p2 when p1(i) p2(j) <= p2(i) p1(j)
// for all i < j, i.e. the ratio p1/p2 is nondecreasing where defined.
inline bool mlr_geq(const Vector& p1, const Vector& p2, double tol = kOrderTol) {
  if (p1.size() != p2.size()) throw DimensionMismatch("mlr: length mismatch");
  return detail::mlr_cross(p1, p2, tol);
}

inline bool mlr_geq(const BeliefVector& p1, const BeliefVector& p2,
                    double tol = kOrderTol) {
  return mlr_geq(p1.vec(), p2.vec(), tol);
}

// First-order stochastic dominance via tail sums, accumulated from the top
// so point masses at the upper end compare exactly.
inline bool fosd_geq(const Vector& p1, const Vector& p2, double tol = kOrderTol) {
  if (p1.size() != p2.size()) throw DimensionMismatch("fosd: length mismatch");
  double t1 = 0.0, t2 = 0.0;
  for (Eigen::Index k = p1.size() - 1; k >= 0; --k) {
    t1 += p1[k];
    t2 += p2[k];
    if (t1 < t2 - tol) return false;
  }
  return true;
}

inline bool fosd_geq(const BeliefVector& p1, const BeliefVector& p2,
                     double tol = kOrderTol) {
  return fosd_geq(p1.vec(), p2.vec(), tol);
}

// Total positivity of order 2 for a nonnegative matrix: every 2x2 minor taken
// from rows i < j and columns k < l is >= -tol. Equivalently every row is
// MLR-dominated by the next row, which is the scan used here (transitivity
// gives the non-adjacent row pairs).
inline bool is_tp2(const Matrix& P, double tol = kOrderTol) {
  for (Eigen::Index i = 0; i + 1 < P.rows(); ++i) {
    Vector lo = P.row(i).transpose();
    Vector hi = P.row(i + 1).transpose();
    // hi >=_r lo: hi(k) lo(l) <= lo(k) hi(l) for k < l.
    if (!detail::mlr_cross(hi, lo, tol)) return false;
  }
  return true;
}

// Multivariate TP2 order over a product state space: p >=_TP2 q when
// p(i) q(j) <= p(i v j) q(i ^ j) with componentwise join/meet on the digit
// tuples. Brute force over ordered index pairs; refuses above `pair_cap`.
inline bool tp2_geq_multivariate(const Vector& p, const Vector& q,
                                 const std::vector<int>& shape,
                                 double tol = kOrderTol,
                                 long long pair_cap = 10000) {
  JointIndexCodec codec(shape);
  const long long X = codec.total();
  if (p.size() != X || q.size() != X)
    throw DimensionMismatch("tp2 order: vector length != product of shape");
  if (X * X > pair_cap)
    throw SizeCap("tp2 order: pair count exceeds brute-force cap");
  std::vector<std::vector<int>> digits(X);
  for (long long f = 1; f <= X; ++f) digits[f - 1] = codec.decode(f);
  const int L = codec.factors();
  std::vector<int> meet(L), join(L);
  for (long long i = 0; i < X; ++i)
    for (long long j = 0; j < X; ++j) {
      if (i == j) continue;
      for (int l = 0; l < L; ++l) {
        meet[l] = std::min(digits[i][l], digits[j][l]);
        join[l] = std::max(digits[i][l], digits[j][l]);
      }
      const long long vj = codec.encode(join) - 1;
      const long long mj = codec.encode(meet) - 1;
      if (p[i] * q[j] > p[vj] * q[mj] + tol) return false;
    }
  return true;
}

inline bool tp2_geq_multivariate(const BeliefVector& p, const BeliefVector& q,
                                 const std::vector<int>& shape,
                                 double tol = kOrderTol,
                                 long long pair_cap = 10000) {
  return tp2_geq_multivariate(p.vec(), q.vec(), shape, tol, pair_cap);
}

}  // namespace hmmbounds
