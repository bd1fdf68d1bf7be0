#pragma once
// Importance-sampled prediction steps whose estimates are confined between a
// pair of likelihood-ratio-ordered bound beliefs.  Each coordinate of the
// predicted vector is estimated from weighted draws, but draws whose weight
// falls outside a window derived from the bound corridor are rejected, so the
// finished estimate respects the same ordering sandwich as the exact filter
// at any sample size.  A companion routine estimates the prediction through a
// low-rank factorization, one importance sum per retained factor.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "filter.hpp"
#include "orders.hpp"
#include "simulate.hpp"
#include "types.hpp"

namespace hmmbounds {

enum class ImportanceChoice { Posterior, LowerWeighted, UpperWeighted };

struct SamplerConfig {
  int iterations = 100;  // draws per coordinate (or per factor)
  ImportanceChoice q_choice = ImportanceChoice::Posterior;
  std::uint64_t seed = 0;
  // When false the windows keep only the running-mass cap (lower edge 0),
  // which is the plain importance-sampling estimator used as a baseline.
  bool constrained = true;
  // Checking the likelihood-ratio order of the bound pair costs O(X^2).  A
  // caller that reuses one externally validated pair across many calls can
  // skip the recheck; with the default every call validates its inputs.
  bool assume_ordered_bounds = false;

  void validate() const {
    if (iterations < 1)
      throw std::invalid_argument("sampler: iterations must be at least 1");
  }
};

// Proposal distribution for one coordinate (1-based).  Posterior reuses the
// previous estimate unchanged; the weighted choices tilt it by the matching
// column of a bound matrix.  A column with no mass falls back to uniform.
inline Vector importance_distribution(ImportanceChoice choice, int coordinate,
                                      const BeliefVector& prev,
                                      const TransitionMatrix* weights = nullptr) {
  const int X = prev.size();
  if (coordinate < 1 || coordinate > X)
    throw IndexOutOfRange("sampler: coordinate out of range");
  if (choice == ImportanceChoice::Posterior) return prev.vec();
  if (weights == nullptr)
    throw std::invalid_argument(
        "sampler: weighted importance choice needs a bound matrix");
  if (weights->size() != X)
    throw DimensionMismatch("sampler: weight matrix size != belief size");
  Vector q = weights->dense().col(coordinate - 1).cwiseProduct(prev.vec());
  const double total = q.sum();
  if (!(total > 0.0)) return Vector::Constant(X, 1.0 / X);
  return Vector(q / total);
}

struct ConstrainedEstimate {
  BeliefVector predicted;
  BeliefVector filtered;
  Vector raw_predicted;  // per-coordinate estimates before renormalization
  Vector alpha;          // lower acceptance edge applied at each coordinate
  Vector beta;           // upper acceptance edge applied at each coordinate
  std::vector<int> acceptance_counts;
  std::vector<bool> coordinate_fallback;  // nothing accepted: lower bound used
  bool clipped = false;        // a finalized value needed window clipping
  bool full_fallback = false;  // estimate had no mass: lower bound returned
};

namespace detail {

// Immutable cumulative table over a nonnegative weight vector; each draw is
// one uniform variate plus a binary search.
class CategoricalTable {
 public:
  explicit CategoricalTable(const Vector& q) : q_(&q) {
    cum_.resize(static_cast<std::size_t>(q.size()));
    double run = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      if (q[i] < 0.0) throw DegenerateDistribution("sampler: negative weight");
      run += q[i];
      cum_[static_cast<std::size_t>(i)] = run;
    }
    total_ = run;
    if (!(total_ > 0.0))
      throw DegenerateDistribution("sampler: zero proposal mass");
  }

  double total() const { return total_; }
  const Vector& weights() const { return *q_; }

  int draw(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, total_);
    const double u = unif(rng);
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    int i = static_cast<int>(it - cum_.begin());
    const int X = static_cast<int>(cum_.size());
    if (i >= X) i = X - 1;
    while (i > 0 && !((*q_)[i] > 0.0)) --i;  // rounding spill onto a zero cell
    return i;
  }

 private:
  const Vector* q_;
  std::vector<double> cum_;
  double total_ = 0.0;
};

// Per-coordinate view of a shared table with index elimination.  Eliminating
// an index is O(1); draws are redrawn against the (normally tiny) dead list,
// which samples exactly the renormalized distribution over surviving indices.
// If eliminated mass makes redraws dominate, a compacted private table over
// the survivors is built once.
class Eliminator {
 public:
  explicit Eliminator(const CategoricalTable& base)
      : base_(&base), live_mass_(base.total()) {}

  bool exhausted() const { return !(live_mass_ > base_->total() * 1e-12); }

  void eliminate(int i) {
    if (is_dead(i)) return;
    dead_.push_back(i);
    live_mass_ -= base_->weights()[i];
    compacted_.reset();  // a stale private table would resample dead indices
    compact_q_.resize(0);
  }

  int draw(Rng& rng) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 64 && !compacted_) compact();
      const int i = compacted_ ? compacted_->draw(rng) : base_->draw(rng);
      if (!is_dead(i)) return i;
    }
  }

 private:
  bool is_dead(int i) const {
    for (int d : dead_)
      if (d == i) return true;
    return false;
  }

  void compact() {
    compact_q_ = base_->weights();
    for (int d : dead_) compact_q_[d] = 0.0;
    compacted_.emplace(compact_q_);
  }

  const CategoricalTable* base_;
  std::vector<int> dead_;
  double live_mass_ = 0.0;
  Vector compact_q_;
  std::optional<CategoricalTable> compacted_;
};

inline void bump(std::uint64_t* counter, std::uint64_t n) {
  if (counter != nullptr) *counter += n;
}

}  // namespace detail

// One prediction-plus-correction step of the window-constrained importance
// sampler.  `lower` and `upper` are the already-predicted bound beliefs for
// this step and must satisfy upper >= lower in the likelihood-ratio order.
// Coordinates are finalized in increasing index order; each window uses the
// previously finalized value, so a clip at coordinate j-1 propagates into
// the window for j.  Rejected indices are removed from the proposal for the
// remainder of that coordinate; acceptance tests and weights always use the
// original proposal probabilities, which keeps the accepted values and the
// estimate's target unchanged by the removal.  `weight_matrix` supplies the
// bound matrix for the weighted importance choices.  `multiply_counter`, when
// given, accumulates the multiplications and divisions spent on
// state-dimension data.
inline ConstrainedEstimate constrained_is_step(
    const BeliefVector& prev, const BeliefVector& lower,
    const BeliefVector& upper, const Observation& y, const TransitionMatrix& P,
    const ObservationModel& obs, const SamplerConfig& cfg,
    const TransitionMatrix* weight_matrix = nullptr,
    std::uint64_t* multiply_counter = nullptr) {
  cfg.validate();
  const int X = prev.size();
  if (lower.size() != X || upper.size() != X || P.size() != X ||
      obs.state_count() != X)
    throw DimensionMismatch("sampler: inconsistent dimensions");
  if (!cfg.assume_ordered_bounds && !mlr_geq(upper, lower))
    throw InvalidBounds("sampler: bounds are not likelihood-ratio ordered");
  if (cfg.q_choice != ImportanceChoice::Posterior && weight_matrix == nullptr)
    throw std::invalid_argument(
        "sampler: weighted importance choice needs a bound matrix");

  Vector raw = Vector::Zero(X);
  Vector alpha = Vector::Zero(X);
  Vector beta = Vector::Zero(X);
  std::vector<int> counts(static_cast<std::size_t>(X), 0);
  std::vector<bool> fallback(static_cast<std::size_t>(X), false);
  bool clipped = false;

  const bool posterior = (cfg.q_choice == ImportanceChoice::Posterior);
  // The posterior proposal is the same for every coordinate: build its draw
  // table once per step instead of once per coordinate.
  std::optional<detail::CategoricalTable> shared;
  if (posterior) shared.emplace(prev.vec());

  const Matrix& Pd = P.dense();
  double upper_tail = 0.0;  // sum of upper-bound mass before this coordinate
  for (int j = 0; j < X; ++j) {
    double a = 0.0, b = 1.0;
    if (j > 0) {
      const double prev_coord = raw[j - 1];
      if (cfg.constrained && lower[j - 1] > 0.0)
        a = lower[j] * prev_coord / lower[j - 1];
      double ratio = std::numeric_limits<double>::infinity();
      if (cfg.constrained && upper[j - 1] > 0.0)
        ratio = upper[j] * prev_coord / upper[j - 1];
      b = std::min(ratio, std::max(1.0 - upper_tail, 0.0));
      detail::bump(multiply_counter, 4);
    }
    alpha[j] = a;
    beta[j] = b;

    Vector qcol;
    if (!posterior) {
      qcol = importance_distribution(cfg.q_choice, j + 1, prev, weight_matrix);
      detail::bump(multiply_counter, 2 * static_cast<std::uint64_t>(X));
    }
    const Vector& q = posterior ? prev.vec() : qcol;
    std::optional<detail::CategoricalTable> own;
    if (!posterior) own.emplace(q);
    detail::Eliminator sampler(posterior ? *shared : *own);
    Rng rng(split_seed(cfg.seed, static_cast<std::uint64_t>(j) + 1));

    int accepted = 0;
    double acc = 0.0;
    for (int l = 0; l < cfg.iterations; ++l) {
      if (sampler.exhausted()) break;
      const int i = sampler.draw(rng);
      const double w = Pd(i, j) * prev[i] / q[i];
      detail::bump(multiply_counter, 2);
      if (w >= a && w <= b) {
        ++accepted;
        acc += w;
      } else {
        sampler.eliminate(i);
      }
    }

    counts[static_cast<std::size_t>(j)] = accepted;
    const double value = accepted > 0 ? acc / accepted : lower[j];
    fallback[static_cast<std::size_t>(j)] = (accepted == 0);
    // Window repair: an empty window (a > b) resolves to its upper edge.
    const double repaired = std::min(std::max(value, a), b);
    if (repaired != value) clipped = true;
    raw[j] = repaired;
    upper_tail += upper[j];
  }

  const double mass = raw.sum();
  bool full_fallback = false;
  BeliefVector predicted = lower;
  if (mass > 0.0) {
    predicted = BeliefVector::normalized(raw);
    detail::bump(multiply_counter, static_cast<std::uint64_t>(X));
  } else {
    full_fallback = true;
  }
  BeliefVector filtered = bayes_update(obs, predicted, y).posterior;
  detail::bump(multiply_counter, 2 * static_cast<std::uint64_t>(X));
  return ConstrainedEstimate{std::move(predicted),
                             std::move(filtered),
                             std::move(raw),
                             std::move(alpha),
                             std::move(beta),
                             std::move(counts),
                             std::move(fallback),
                             clipped,
                             full_fallback};
}

struct LowRankEstimate {
  BeliefVector predicted;
  BeliefVector filtered;
  Vector factor_estimates;  // importance estimate of u_r . prev, one per factor
};

// Prediction step through an attached low-rank factorization: each retained
// factor contributes one importance-sampled inner product, so the work grows
// with the number of factors instead of the state count squared.  The
// assembled prediction is clipped at zero and renormalized before the
// correction step.  For the weighted importance choices the proposal tilts
// the previous estimate by the factor's left vector magnitudes.
inline LowRankEstimate lowrank_is_step(const BeliefVector& prev,
                                       const TransitionMatrix& lowrank,
                                       const Observation& y,
                                       const ObservationModel& obs,
                                       const SamplerConfig& cfg,
                                       std::uint64_t* multiply_counter = nullptr) {
  cfg.validate();
  const int X = prev.size();
  if (lowrank.size() != X || obs.state_count() != X)
    throw DimensionMismatch("sampler: inconsistent dimensions");
  if (!lowrank.has_factorization())
    throw std::invalid_argument("sampler: matrix carries no factorization");

  const auto& factors = lowrank.factors();
  const int R = static_cast<int>(factors.size());
  Vector estimates = Vector::Zero(R);
  Vector raw = Vector::Zero(X);
  for (int r = 0; r < R; ++r) {
    const auto& f = factors[static_cast<std::size_t>(r)];
    Vector qvec;
    if (cfg.q_choice != ImportanceChoice::Posterior) {
      qvec = f.u.cwiseAbs().cwiseProduct(prev.vec());
      const double total = qvec.sum();
      qvec = total > 0.0 ? Vector(qvec / total) : Vector::Constant(X, 1.0 / X);
      detail::bump(multiply_counter, 2 * static_cast<std::uint64_t>(X));
    }
    const Vector& q =
        cfg.q_choice == ImportanceChoice::Posterior ? prev.vec() : qvec;
    const detail::CategoricalTable table(q);
    Rng rng(split_seed(cfg.seed, static_cast<std::uint64_t>(r) + 1));
    double acc = 0.0;
    for (int l = 0; l < cfg.iterations; ++l) {
      const int i = table.draw(rng);
      acc += f.u[i] * prev[i] / q[i];
      detail::bump(multiply_counter, 2);
    }
    estimates[r] = acc / cfg.iterations;
    raw += (f.sigma * estimates[r]) * f.v;
    detail::bump(multiply_counter, static_cast<std::uint64_t>(X) + 1);
  }

  for (int j = 0; j < X; ++j) raw[j] = std::max(raw[j], 0.0);
  if (!(raw.sum() > 0.0))
    throw DegenerateDistribution("sampler: estimate has no positive mass");

  LowRankEstimate out{BeliefVector::normalized(raw), BeliefVector::uniform(X),
                      std::move(estimates)};
  detail::bump(multiply_counter, static_cast<std::uint64_t>(X));
  out.filtered = bayes_update(obs, out.predicted, y).posterior;
  detail::bump(multiply_counter, 2 * static_cast<std::uint64_t>(X));
  return out;
}

}  // namespace hmmbounds
