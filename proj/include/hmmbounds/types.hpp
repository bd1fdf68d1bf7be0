#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "errors.hpp"

namespace hmmbounds {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;  // column-major

// Tolerances shared by the constructors below.
inline constexpr double kSumTol = 1e-9;       // row/probability sum check
inline constexpr double kNegTol = 1e-12;      // clip floor for tiny negatives
inline constexpr double kFactorTol = 1e-8;    // factorization reconstruction
inline constexpr double kLikelihoodFloor = 1e-300;

// ---------------------------------------------------------------------------
// BeliefVector: probability vector over 1..X (stored 0-based).
// Entries are nonnegative and sum to one; construction validates to 1e-9 and
// then renormalizes exactly so downstream arithmetic starts from sum == 1.
// ---------------------------------------------------------------------------
class BeliefVector {
 public:
  explicit BeliefVector(Vector p) : p_(std::move(p)) {
    if (p_.size() == 0) throw DimensionMismatch("belief: empty vector");
    double s = 0.0;
    for (Eigen::Index i = 0; i < p_.size(); ++i) {
      double v = p_[i];
      if (v < 0.0) {
        if (v < -kNegTol) throw InvalidBounds("belief: negative entry");
        p_[i] = 0.0;
        v = 0.0;
      }
      s += v;
    }
    if (std::abs(s - 1.0) > kSumTol)
      throw InvalidBounds("belief: entries sum to " + std::to_string(s));
    p_ /= s;
  }

  // Renormalize an arbitrary nonnegative vector with positive mass.
  static BeliefVector normalized(Vector p) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (p[i] < 0.0) {
        if (p[i] < -kNegTol) throw InvalidBounds("belief: negative entry");
        p[i] = 0.0;
      }
      s += p[i];
    }
    if (!(s > 0.0)) throw InvalidBounds("belief: zero total mass");
    return BeliefVector(Vector(p / s));
  }

  static BeliefVector uniform(int states) {
    return BeliefVector(Vector::Constant(states, 1.0 / states));
  }

  // Point mass on 1-based state.
  static BeliefVector unit(int states, int state) {
    if (state < 1 || state > states) throw IndexOutOfRange("belief: unit state");
    Vector p = Vector::Zero(states);
    p[state - 1] = 1.0;
    return BeliefVector(std::move(p));
  }

  int size() const { return static_cast<int>(p_.size()); }
  double operator[](int i) const { return p_[i]; }  // 0-based access
  const Vector& vec() const { return p_; }

 private:
  Vector p_;
};

// ---------------------------------------------------------------------------
// TransitionMatrix: row-stochastic X x X matrix, optionally carrying a
// low-rank factorization P ~= sum_r sigma_r u_r v_r' used by the fast
// prediction path.
// ---------------------------------------------------------------------------
struct TransitionFactor {
  double sigma;
  Vector u;  // left singular vector (length X)
  Vector v;  // right singular vector (length X)
};

class TransitionMatrix {
 public:
  static TransitionMatrix from_matrix(Matrix P) {
    if (P.rows() == 0 || P.rows() != P.cols())
      throw DimensionMismatch("transition: matrix must be square");
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < P.cols(); ++j) {
        double v = P(i, j);
        if (v < 0.0) {
          if (v < -kNegTol) throw InvalidBounds("transition: negative entry");
          P(i, j) = 0.0;
          v = 0.0;
        }
        s += v;
      }
      if (std::abs(s - 1.0) > kSumTol)
        throw InvalidBounds("transition: row " + std::to_string(i + 1) +
                            " sums to " + std::to_string(s));
      P.row(i) /= s;
    }
    TransitionMatrix t;
    t.P_ = std::move(P);
    return t;
  }

  int size() const { return static_cast<int>(P_.rows()); }
  const Matrix& dense() const { return P_; }
  double operator()(int i, int j) const { return P_(i, j); }  // 0-based

  bool has_factorization() const { return !factors_.empty(); }
  const std::vector<TransitionFactor>& factors() const { return factors_; }
  int rank() const { return static_cast<int>(factors_.size()); }

  // Attach a factorization after checking it reproduces P to within
  // kFactorTol in relative spectral norm.
  void attach_factorization(std::vector<TransitionFactor> f) {
    Matrix R = Matrix::Zero(P_.rows(), P_.cols());
    for (const auto& t : f) {
      if (t.u.size() != P_.rows() || t.v.size() != P_.cols())
        throw DimensionMismatch("transition: factor length");
      R += t.sigma * t.u * t.v.transpose();
    }
    const double denom = P_.norm();
    if ((R - P_).norm() > kFactorTol * (denom > 0 ? denom : 1.0))
      throw InvalidBounds("transition: factorization does not reproduce matrix");
    factors_ = std::move(f);
  }

  // Build and attach the rank-r truncated SVD factorization.
  void factor_from_svd(int rank) {
    Eigen::BDCSVD<Matrix> svd(P_, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (rank < 1 || rank > P_.rows())
      throw IndexOutOfRange("transition: factorization rank");
    std::vector<TransitionFactor> f;
    f.reserve(rank);
    for (int r = 0; r < rank; ++r)
      f.push_back({svd.singularValues()[r], svd.matrixU().col(r), svd.matrixV().col(r)});
    attach_factorization(std::move(f));
  }

 private:
  Matrix P_;
  std::vector<TransitionFactor> factors_;
};

// ---------------------------------------------------------------------------
// Observations: 1-based symbol for finite alphabets, real number for the
// additive-Gaussian model.
// ---------------------------------------------------------------------------
using Observation = std::variant<int, double>;

inline Observation discrete_obs(int y) { return Observation(std::in_place_index<0>, y); }
inline Observation real_obs(double y) { return Observation(std::in_place_index<1>, y); }

class ObservationModel {
 public:
  enum class Kind { Discrete, Gaussian };

  // Finite-alphabet model from a dense X x Y likelihood matrix.
  static ObservationModel discrete(const Matrix& B) {
    if (B.rows() == 0 || B.cols() == 0)
      throw DimensionMismatch("obs: empty likelihood matrix");
    SparseMatrix S(B.rows(), B.cols());
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index i = 0; i < B.rows(); ++i) {
      double s = 0.0;
      for (Eigen::Index y = 0; y < B.cols(); ++y) {
        double v = B(i, y);
        if (v < -kNegTol) throw InvalidBounds("obs: negative likelihood");
        if (v > 0.0) {
          trip.emplace_back(i, y, v);
          s += v;
        }
      }
      if (std::abs(s - 1.0) > kSumTol)
        throw InvalidBounds("obs: row " + std::to_string(i + 1) + " sums to " +
                            std::to_string(s));
    }
    S.setFromTriplets(trip.begin(), trip.end());
    ObservationModel m;
    m.kind_ = Kind::Discrete;
    m.B_ = std::move(S);
    return m;
  }

  static ObservationModel discrete_sparse(SparseMatrix B) {
    ObservationModel m;
    m.kind_ = Kind::Discrete;
    m.B_ = std::move(B);
    Vector rowsum = Vector::Zero(m.B_.rows());
    for (int k = 0; k < m.B_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(m.B_, k); it; ++it) {
        if (it.value() < -kNegTol) throw InvalidBounds("obs: negative likelihood");
        rowsum[it.row()] += it.value();
      }
    for (Eigen::Index i = 0; i < rowsum.size(); ++i)
      if (std::abs(rowsum[i] - 1.0) > kSumTol)
        throw InvalidBounds("obs: row " + std::to_string(i + 1) + " sums to " +
                            std::to_string(rowsum[i]));
    return m;
  }

  // y_k = levels[x_k] + v_k with v_k ~ N(0, sigma^2).
  static ObservationModel gaussian(Vector levels, double sigma) {
    if (levels.size() == 0) throw DimensionMismatch("obs: empty level vector");
    if (!(sigma > 0)) throw InvalidBounds("obs: sigma must be positive");
    ObservationModel m;
    m.kind_ = Kind::Gaussian;
    m.levels_ = std::move(levels);
    m.sigma_ = sigma;
    return m;
  }

  Kind kind() const { return kind_; }
  bool is_discrete() const { return kind_ == Kind::Discrete; }
  int state_count() const {
    return kind_ == Kind::Discrete ? static_cast<int>(B_.rows())
                                   : static_cast<int>(levels_.size());
  }
  int symbol_count() const {
    if (kind_ != Kind::Discrete) throw RequiresDiscreteObs("obs: no finite alphabet");
    return static_cast<int>(B_.cols());
  }
  const SparseMatrix& likelihood_matrix() const {
    if (kind_ != Kind::Discrete) throw RequiresDiscreteObs("obs: no likelihood matrix");
    return B_;
  }
  const Vector& levels() const { return levels_; }
  double sigma() const { return sigma_; }

  // Per-state likelihood column for an observation. Gaussian densities are
  // evaluated in natural scale and floored at kLikelihoodFloor; the floor is
  // applied only when at least one state is above it (otherwise the caller
  // sees a ZeroLikelihood).
  Vector likelihood(const Observation& y) const {
    if (kind_ == Kind::Discrete) {
      if (!std::holds_alternative<int>(y))
        throw RequiresDiscreteObs("obs: expected 1-based symbol");
      const int sym = std::get<int>(y);
      if (sym < 1 || sym > symbol_count())
        throw IndexOutOfRange("obs: symbol out of range");
      Vector col = Vector::Zero(B_.rows());
      for (SparseMatrix::InnerIterator it(B_, sym - 1); it; ++it)
        col[it.row()] = it.value();
      return col;
    }
    if (!std::holds_alternative<double>(y))
      throw DimensionMismatch("obs: expected real observation");
    const double yv = std::get<double>(y);
    Vector dens(levels_.size());
    double maxd = 0.0;
    for (Eigen::Index i = 0; i < levels_.size(); ++i) {
      const double z = (yv - levels_[i]) / sigma_;
      dens[i] = std::exp(-0.5 * z * z) / (sigma_ * std::sqrt(2.0 * M_PI));
      maxd = std::max(maxd, dens[i]);
    }
    if (maxd < kLikelihoodFloor)
      throw ZeroLikelihood("obs: all states below density floor");
    for (Eigen::Index i = 0; i < dens.size(); ++i)
      dens[i] = std::max(dens[i], kLikelihoodFloor);
    return dens;
  }

 private:
  Kind kind_ = Kind::Discrete;
  SparseMatrix B_;
  Vector levels_;
  double sigma_ = 0.0;
};

// ---------------------------------------------------------------------------
// HmmModel: transition kernel + observation model + state levels g
// (defaults to 1..X), bundled with consistency checks.
// ---------------------------------------------------------------------------
struct HmmModel {
  TransitionMatrix P;
  ObservationModel obs;
  Vector g;

  static HmmModel make(TransitionMatrix P, ObservationModel obs, Vector g = Vector()) {
    if (obs.state_count() != P.size())
      throw DimensionMismatch("model: obs state count != transition size");
    if (g.size() == 0) {
      g = Vector::LinSpaced(P.size(), 1.0, static_cast<double>(P.size()));
    } else if (g.size() != P.size()) {
      throw DimensionMismatch("model: level vector length");
    }
    return HmmModel{std::move(P), std::move(obs), std::move(g)};
  }

  int size() const { return P.size(); }
};

}  // namespace hmmbounds
