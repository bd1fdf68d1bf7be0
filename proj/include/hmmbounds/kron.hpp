#pragma once
// Builders for product-form chains over several interacting components:
//  * tp2_generator: matrix exponential of a tridiagonal generator, checked
//    to be TP2 (birth-death semigroups are),
//  * KronTransition: lazy Kronecker-product transition whose predict runs by
//    per-axis contractions in O(X * sum S_l) instead of O(X^2), with dense
//    materialization behind a size cap,
//  * sum_gaussian_obs: observation = sum of 1-based component states plus
//    Gaussian noise,
//  * tridiagonal_obs: discrete observation matrix concentrated on the
//    diagonal, boundary rows renormalized,
//  * envelope_rows / envelope_rank1_bounds: rank-one bound rows built from
//    extreme adjacent-column ratios. They apply to any strictly positive
//    matrix; a Kronecker product of distinct TP2 factors is not TP2 in the
//    flat univariate sense (adjacent flat rows reset their ratio between
//    blocks), so extreme-row constructions that require flat TP2 refuse it
//    while the envelope still yields valid likelihood-ratio bounds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bounds.hpp"
#include "errors.hpp"
#include "indexing.hpp"
#include "orders.hpp"
#include "types.hpp"

namespace hmmbounds {

inline constexpr long long kKronDenseCap = 4096;

namespace detail {

// Scaling-and-squaring matrix exponential with a truncated series on the
// scaled matrix (infinity norm brought at or below one half, where thirty
// terms leave residuals far under 1e-12).
inline Matrix expm(const Matrix& m) {
  const Eigen::Index n = m.rows();
  double norm = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    norm = std::max(norm, m.row(i).cwiseAbs().sum());
  int s = 0;
  while (norm > 0.5 && s < 64) {
    norm *= 0.5;
    ++s;
  }
  const Matrix a = m / std::ldexp(1.0, s);
  Matrix e = Matrix::Identity(n, n);
  Matrix term = Matrix::Identity(n, n);
  for (int k = 1; k <= 30; ++k) {
    term = (term * a / static_cast<double>(k)).eval();
    e += term;
    if (term.cwiseAbs().maxCoeff() < 1e-17) break;
  }
  for (int i = 0; i < s; ++i) e = (e * e).eval();
  return e;
}

}  // namespace detail

// Transition matrix exp(t Q) of a tridiagonal generator Q (nonnegative
// off-diagonal band, zero row sums, nothing outside the band). The result is
// verified TP2; t = 0 gives the identity.
inline TransitionMatrix tp2_generator(const Matrix& q, double t) {
  const Eigen::Index X = q.rows();
  if (X == 0 || q.cols() != X)
    throw DimensionMismatch("tp2_generator: generator must be square");
  if (!(t >= 0.0))
    throw std::invalid_argument("tp2_generator: time must be nonnegative");
  for (Eigen::Index i = 0; i < X; ++i) {
    double row_sum = 0.0;
    for (Eigen::Index j = 0; j < X; ++j) {
      const double v = q(i, j);
      row_sum += v;
      if (i == j) continue;
      if (std::abs(i - j) > 1) {
        if (v != 0.0)
          throw NotGenerator("tp2_generator: entry outside the tridiagonal band");
      } else if (v < 0.0) {
        throw NotGenerator("tp2_generator: negative off-diagonal entry");
      }
    }
    if (std::abs(row_sum) > 1e-10)
      throw NotGenerator("tp2_generator: row does not sum to zero");
  }
  Matrix a = detail::expm(t * q);
  for (Eigen::Index i = 0; i < X; ++i)
    if (std::abs(a.row(i).sum() - 1.0) > 1e-9)
      throw SolverStalled("tp2_generator: exponential lost row stochasticity");
  TransitionMatrix out = TransitionMatrix::from_matrix(std::move(a));
  if (!is_tp2(out.dense()))
    throw NotTP2("tp2_generator: exponential is not TP2");
  return out;
}

// Five-state birth-death generator used by the bundled experiment presets.
inline Matrix preset_generator() {
  Matrix q(5, 5);
  q << -0.8147, 0.8147, 0.0, 0.0, 0.0,
      0.4529, -0.5164, 0.0635, 0.0, 0.0,
      0.0, 0.4567, -0.7729, 0.3162, 0.0,
      0.0, 0.0, 0.0488, -0.1880, 0.1392,
      0.0, 0.0, 0.0, 0.5469, -0.5469;
  return q;
}

// Lazy Kronecker-product transition over component chains. Flat indices are
// 0-based with the first component varying slowest, matching JointIndexCodec.
class KronTransition {
 public:
  explicit KronTransition(std::vector<TransitionMatrix> factors)
      : factors_(std::move(factors)), codec_(sizes_of(factors_)) {}

  const std::vector<TransitionMatrix>& factors() const { return factors_; }
  const JointIndexCodec& codec() const { return codec_; }
  long long size() const { return codec_.total(); }

  double entry(long long i, long long j) const {
    const std::vector<int> di = codec_.decode(i + 1);
    const std::vector<int> dj = codec_.decode(j + 1);
    double v = 1.0;
    for (std::size_t l = 0; l < factors_.size(); ++l)
      v *= factors_[l](di[l] - 1, dj[l] - 1);
    return v;
  }

  // Predicted belief P' pi by contracting one component axis at a time.
  BeliefVector predict(const BeliefVector& pi) const {
    const long long total = codec_.total();
    if (pi.size() != total)
      throw DimensionMismatch("kron predict: belief size != joint size");
    Vector buf = pi.vec();
    long long stride = total;
    Vector in(1), out(1);
    for (std::size_t l = 0; l < factors_.size(); ++l) {
      const Matrix& a = factors_[l].dense();
      const int S = static_cast<int>(a.rows());
      stride /= S;
      const long long outer = total / (stride * S);
      in.resize(S);
      out.resize(S);
      for (long long o = 0; o < outer; ++o) {
        const long long base = o * S * stride;
        for (long long r = 0; r < stride; ++r) {
          for (int c = 0; c < S; ++c) in[c] = buf[base + c * stride + r];
          for (int jj = 0; jj < S; ++jj) {
            double acc = 0.0;
            for (int c = 0; c < S; ++c) acc += a(c, jj) * in[c];
            out[jj] = acc;
          }
          for (int jj = 0; jj < S; ++jj) buf[base + jj * stride + r] = out[jj];
        }
      }
    }
    return BeliefVector::normalized(std::move(buf));
  }

  // Dense materialization, refused beyond the cap.
  TransitionMatrix dense(long long cap = kKronDenseCap) const {
    if (codec_.total() > cap)
      throw SizeCap("kron dense: joint size exceeds the materialization cap");
    Matrix m = factors_.front().dense();
    for (std::size_t l = 1; l < factors_.size(); ++l) {
      const Matrix& b = factors_[l].dense();
      const Eigen::Index ra = m.rows(), rb = b.rows();
      Matrix next(ra * rb, ra * rb);
      for (Eigen::Index i1 = 0; i1 < ra; ++i1)
        for (Eigen::Index j1 = 0; j1 < ra; ++j1)
          for (Eigen::Index i2 = 0; i2 < rb; ++i2)
            for (Eigen::Index j2 = 0; j2 < rb; ++j2)
              next(i1 * rb + i2, j1 * rb + j2) = m(i1, j1) * b(i2, j2);
      m = std::move(next);
    }
    return TransitionMatrix::from_matrix(std::move(m));
  }

 private:
  static std::vector<int> sizes_of(const std::vector<TransitionMatrix>& f) {
    std::vector<int> s;
    s.reserve(f.size());
    for (const auto& t : f) s.push_back(t.size());
    return s;  // an empty list is rejected by the codec
  }

  std::vector<TransitionMatrix> factors_;
  JointIndexCodec codec_;
};

inline KronTransition kron_transition(std::vector<TransitionMatrix> factors) {
  return KronTransition(std::move(factors));
}

// Observation y = (sum of 1-based component states) + Gaussian noise.
inline ObservationModel sum_gaussian_obs(const std::vector<int>& shape,
                                         double sigma) {
  const JointIndexCodec codec(shape);
  if (codec.total() > std::numeric_limits<int>::max())
    throw SizeCap("sum_gaussian_obs: joint size exceeds the integer range");
  const int X = static_cast<int>(codec.total());
  Vector levels(X);
  for (int f = 1; f <= X; ++f) {
    const std::vector<int> d = codec.decode(f);
    levels[f - 1] =
        static_cast<double>(std::accumulate(d.begin(), d.end(), 0));
  }
  return ObservationModel::gaussian(std::move(levels), sigma);
}

// Discrete observation matrix with b on the diagonal and (1-b)/2 on each
// neighbor; the two boundary rows lose one neighbor and are renormalized so
// every row is a probability vector.
inline ObservationModel tridiagonal_obs(int states, double b) {
  if (states < 1)
    throw std::invalid_argument("tridiagonal_obs: need at least one state");
  if (!(b > 0.0) || b > 1.0)
    throw std::invalid_argument("tridiagonal_obs: b must lie in (0, 1]");
  Matrix m = Matrix::Zero(states, states);
  const double side = 0.5 * (1.0 - b);
  for (int x = 0; x < states; ++x) {
    m(x, x) = b;
    if (x > 0) m(x, x - 1) = side;
    if (x + 1 < states) m(x, x + 1) = side;
    m.row(x) /= m.row(x).sum();
  }
  return ObservationModel::discrete(m);
}

// Extreme adjacent-column ratio rows of a strictly positive matrix: the
// lower row's successive ratios are the minima of the rows' ratios, the
// upper row's the maxima, so every row of the matrix dominates the lower row
// and is dominated by the upper row in the likelihood-ratio order. Long
// products may underflow; a flushed-to-zero tail (head) of the lower (upper)
// row only loosens that side and remains valid. Both rows are normalized.
inline std::pair<Vector, Vector> envelope_rows(const Matrix& p) {
  const Eigen::Index X = p.rows();
  if (X == 0 || p.cols() != X)
    throw DimensionMismatch("envelope_rows: square matrix required");
  if (!(p.minCoeff() > 0.0))
    throw std::invalid_argument(
        "envelope_rows: entries must be strictly positive");
  Vector mlo(X - 1 > 0 ? X - 1 : 0), mhi(mlo.size());
  for (Eigen::Index j = 0; j + 1 < X; ++j) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (Eigen::Index i = 0; i < X; ++i) {
      const double r = p(i, j + 1) / p(i, j);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    mlo[j] = lo;
    mhi[j] = hi;
  }
  Vector rlo = Vector::Zero(X), rhi = Vector::Zero(X);
  rlo[0] = 1.0;
  for (Eigen::Index j = 0; j + 1 < X; ++j) rlo[j + 1] = rlo[j] * mlo[j];
  rhi[X - 1] = 1.0;
  for (Eigen::Index j = X - 2; j >= 0; --j) rhi[j] = rhi[j + 1] / mhi[j];
  rlo /= rlo.sum();
  rhi /= rhi.sum();
  return {std::move(rlo), std::move(rhi)};
}

// Same construction from the factors of a Kronecker product without touching
// the joint matrix: a step between adjacent flat indices changes one digit
// and resets the faster digits from top to bottom, and the minimum (maximum)
// of the joint row ratios factorizes into per-factor step and reset extremes.
inline std::pair<Vector, Vector> envelope_rows(const KronTransition& kp) {
  const auto& factors = kp.factors();
  const int L = static_cast<int>(factors.size());
  std::vector<std::vector<double>> step_lo(static_cast<std::size_t>(L)),
      step_hi(static_cast<std::size_t>(L));
  std::vector<double> reset_lo(static_cast<std::size_t>(L)),
      reset_hi(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    const Matrix& a = factors[static_cast<std::size_t>(l)].dense();
    const Eigen::Index S = a.rows();
    if (!(a.minCoeff() > 0.0))
      throw std::invalid_argument(
          "envelope_rows: factor entries must be strictly positive");
    auto& slo = step_lo[static_cast<std::size_t>(l)];
    auto& shi = step_hi[static_cast<std::size_t>(l)];
    slo.assign(static_cast<std::size_t>(S - 1), 0.0);
    shi.assign(static_cast<std::size_t>(S - 1), 0.0);
    for (Eigen::Index c = 0; c + 1 < S; ++c) {
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (Eigen::Index i = 0; i < S; ++i) {
        const double r = a(i, c + 1) / a(i, c);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
      slo[static_cast<std::size_t>(c)] = lo;
      shi[static_cast<std::size_t>(c)] = hi;
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (Eigen::Index i = 0; i < S; ++i) {
      const double r = a(i, 0) / a(i, S - 1);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    reset_lo[static_cast<std::size_t>(l)] = lo;
    reset_hi[static_cast<std::size_t>(l)] = hi;
  }

  const long long X = kp.size();
  const std::vector<int>& shape = kp.codec().shape();
  std::vector<int> digits(static_cast<std::size_t>(L), 1);
  Vector rlo = Vector::Zero(X), rhi = Vector::Zero(X);
  Vector mhi_all(X > 1 ? X - 1 : 0);
  rlo[0] = 1.0;
  for (long long f = 0; f + 1 < X; ++f) {
    int pos = L - 1;
    while (digits[static_cast<std::size_t>(pos)] ==
           shape[static_cast<std::size_t>(pos)])
      --pos;
    double lo = step_lo[static_cast<std::size_t>(pos)]
                       [static_cast<std::size_t>(
                           digits[static_cast<std::size_t>(pos)] - 1)];
    double hi = step_hi[static_cast<std::size_t>(pos)]
                       [static_cast<std::size_t>(
                           digits[static_cast<std::size_t>(pos)] - 1)];
    for (int l = pos + 1; l < L; ++l) {
      lo *= reset_lo[static_cast<std::size_t>(l)];
      hi *= reset_hi[static_cast<std::size_t>(l)];
    }
    rlo[f + 1] = rlo[f] * lo;
    mhi_all[f] = hi;
    ++digits[static_cast<std::size_t>(pos)];
    for (int l = pos + 1; l < L; ++l) digits[static_cast<std::size_t>(l)] = 1;
  }
  rhi[X - 1] = 1.0;
  for (long long f = X - 2; f >= 0; --f) rhi[f] = rhi[f + 1] / mhi_all[f];
  rlo /= rlo.sum();
  rhi /= rhi.sum();
  return {std::move(rlo), std::move(rhi)};
}

// Transition matrix with every row equal to the (normalized) given row, its
// rank-one factorization attached analytically.
inline TransitionMatrix rank1_transition(Vector row) {
  const Eigen::Index X = row.size();
  if (X == 0) throw DimensionMismatch("rank1_transition: empty row");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < X; ++i) {
    if (row[i] < 0.0)
      throw InvalidBounds("rank1_transition: negative entry");
    sum += row[i];
  }
  if (!(sum > 0.0))
    throw InvalidBounds("rank1_transition: row carries no mass");
  row /= sum;
  Matrix m(X, X);
  for (Eigen::Index i = 0; i < X; ++i) m.row(i) = row.transpose();
  TransitionMatrix t = TransitionMatrix::from_matrix(std::move(m));
  const double rnorm = row.norm();
  const double sq = std::sqrt(static_cast<double>(X));
  std::vector<TransitionFactor> f;
  f.push_back(
      {sq * rnorm, Vector::Constant(X, 1.0 / sq), Vector(row / rnorm)});
  t.attach_factorization(std::move(f));
  return t;
}

// Rank-one bound pair from the envelope rows. Works for any strictly
// positive transition matrix; certification is optional because the
// certificate search is far more expensive than the construction.
inline BoundPair envelope_rank1_bounds(const TransitionMatrix& P,
                                       bool certify = true) {
  const auto env = envelope_rows(P.dense());
  BoundPair bp;
  bp.lower = rank1_transition(env.first);
  bp.upper = rank1_transition(env.second);
  bp.epsilon = std::max(detail::max_row_l1(bp.lower.dense(), P.dense()),
                        detail::max_row_l1(bp.upper.dense(), P.dense()));
  bp.rank_lower = 1;
  bp.rank_upper = 1;
  if (certify) {
    bp.cert_lower = copositive_order(bp.lower.dense(), P.dense());
    bp.cert_upper = copositive_order(P.dense(), bp.upper.dense());
  }
  return bp;
}

}  // namespace hmmbounds
