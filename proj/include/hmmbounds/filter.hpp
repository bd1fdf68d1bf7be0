#pragma once

#include <cmath>

#include "types.hpp"

namespace hmmbounds {

// One-step Chapman-Kolmogorov prediction P' pi. Uses the attached low-rank
// factorization when present (sum_r sigma_r v_r (u_r' pi)), the dense matrix
// otherwise; the two paths agree to within the factorization tolerance.
inline BeliefVector predict(const TransitionMatrix& P, const BeliefVector& pi) {
  if (P.size() != pi.size())
    throw DimensionMismatch("predict: transition size != belief size");
  if (P.has_factorization()) {
    Vector out = Vector::Zero(pi.size());
    for (const auto& f : P.factors()) out += (f.sigma * f.u.dot(pi.vec())) * f.v;
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0);
    return BeliefVector::normalized(std::move(out));
  }
  return BeliefVector::normalized(P.dense().transpose() * pi.vec());
}

struct FilterStep {
  BeliefVector posterior;
  double normalizer;  // sigma(pi, y) = 1' B_y P' pi, the observation likelihood
};

// Bayes correction of an already-predicted belief.
inline FilterStep bayes_update(const ObservationModel& obs,
                               const BeliefVector& predicted,
                               const Observation& y) {
  if (obs.state_count() != predicted.size())
    throw DimensionMismatch("bayes: obs state count != belief size");
  const Vector lik = obs.likelihood(y);
  Vector post = lik.cwiseProduct(predicted.vec());
  const double norm = post.sum();
  if (!(norm > kLikelihoodFloor))
    throw ZeroLikelihood("bayes: normalizer below floor");
  return FilterStep{BeliefVector::normalized(std::move(post)), norm};
}

// Full HMM filter update T(pi, y): predict then correct.
inline FilterStep filter_update(const HmmModel& model, const BeliefVector& pi,
                                const Observation& y) {
  return bayes_update(model.obs, predict(model.P, pi), y);
}

// E[g(x) | pi] for the level vector g.
inline double conditional_mean(const Vector& g, const BeliefVector& pi) {
  if (g.size() != pi.size())
    throw DimensionMismatch("mean: level vector length != belief size");
  return g.dot(pi.vec());
}

// 1-based maximum a posteriori state; ties break to the lowest index.
inline int map_estimate(const BeliefVector& pi) {
  int arg = 0;
  double best = pi[0];
  for (int i = 1; i < pi.size(); ++i)
    if (pi[i] > best) {
      best = pi[i];
      arg = i;
    }
  return arg + 1;
}

}  // namespace hmmbounds
