#pragma once

// Cardinal error analysis for approximate HMM filtering: the Dobrushin
// ergodicity coefficient, variational distance, an expected one-step
// deviation bound, a per-step sample-path error recursion, and the Bayes
// contraction quantities used to validate them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "types.hpp"

namespace hmmbounds {

// Dobrushin ergodicity coefficient: half the largest l1 distance between two
// rows. Equals 0 for identical rows (iid chain) and 1 for rows with disjoint
// support; contracts predicted belief differences (see tests).
inline double dobrushin(const TransitionMatrix& P) {
  const Matrix& A = P.dense();
  const int n = static_cast<int>(A.rows());
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      worst = std::max(worst, 0.5 * (A.row(i) - A.row(j)).cwiseAbs().sum());
  return worst;
}

// Variational distance: half the l1 norm of the difference.
inline double variational_distance(const Vector& a, const Vector& b) {
  if (a.size() != b.size())
    throw DimensionMismatch("variational: length mismatch");
  return 0.5 * (a - b).cwiseAbs().sum();
}

inline double variational_distance(const BeliefVector& a,
                                   const BeliefVector& b) {
  return variational_distance(a.vec(), b.vec());
}

// Oscillation max_i f_i - min_i f_i: the sharp constant in
// |f'(p - q)| <= oscillation(f) * variational_distance(p, q),
// which tightens the plain Hoelder constant 2 max_i |f_i|.
inline double oscillation(const Vector& f) {
  if (f.size() == 0) return 0.0;
  return f.maxCoeff() - f.minCoeff();
}

// Quantities of the Bayes-update contraction lemma. With B(.,y) the
// per-state likelihoods of y:
//   lhs  = dvar(Bayes(pi,y), Bayes(pi_tilde,y))
//   rhs  = (max_i B_iy / 1'B_y pi) * dvar(pi, pi_tilde)      (lhs <= rhs)
// and the normalizer admits the computable floor
//   1'B_y pi >= max{1'B_y pi_tilde - eps * max_i B_iy, min_i B_iy}
// whenever |pi - pi_tilde|_1 <= eps.
struct BayesContraction {
  double lhs = 0.0;
  double rhs = 0.0;
  double normalizer = 0.0;
  double normalizer_floor = 0.0;
};

inline BayesContraction bayes_contraction_check(const BeliefVector& pi,
                                                const BeliefVector& pi_tilde,
                                                const Observation& y,
                                                const ObservationModel& obs,
                                                double eps) {
  if (pi.size() != pi_tilde.size() || pi.size() != obs.state_count())
    throw DimensionMismatch("contraction: belief and model sizes differ");
  if (!(eps >= 0.0))
    throw std::invalid_argument("contraction: eps must be nonnegative");
  const Vector lik = obs.likelihood(y);
  const double n1 = lik.dot(pi.vec());
  const double n2 = lik.dot(pi_tilde.vec());
  if (!(n1 > kLikelihoodFloor) || !(n2 > kLikelihoodFloor))
    throw ZeroLikelihood("contraction: Bayes normalizer below floor");
  const Vector post1 = lik.cwiseProduct(pi.vec()) / n1;
  const Vector post2 = lik.cwiseProduct(pi_tilde.vec()) / n2;
  BayesContraction out;
  out.lhs = variational_distance(post1, post2);
  out.rhs = (lik.maxCoeff() / n1) * variational_distance(pi, pi_tilde);
  out.normalizer = n1;
  out.normalizer_floor =
      std::max(n2 - eps * lik.maxCoeff(), lik.minCoeff());
  return out;
}

// Upper bound on the expected absolute deviation E_y |g'(T(pi,y;P) -
// T(pi,y;L))| after one update, where L is the model's (approximate) kernel
// and eps bounds |(L - P)' pi|_1 over the simplex:
//   eps * sum_y [max_i h_y(i) - min_i h_y(i)],
//   h_y(i) = B_iy * (g_i - g' T(pi,y;L)).
// Requires a finite observation alphabet; every symbol must have positive
// mass under the predicted belief for its posterior to exist.
inline double one_step_bound_rhs(const BeliefVector& pi, const HmmModel& model,
                                 double eps) {
  if (!model.obs.is_discrete())
    throw RequiresDiscreteObs("deviation bound: needs a finite alphabet");
  if (pi.size() != model.size())
    throw DimensionMismatch("deviation bound: belief size != model size");
  if (!(eps >= 0.0))
    throw std::invalid_argument("deviation bound: eps must be nonnegative");
  const Vector pred = model.P.dense().transpose() * pi.vec();
  const int symbols = model.obs.symbol_count();
  double total = 0.0;
  for (int y = 1; y <= symbols; ++y) {
    const Vector lik = model.obs.likelihood(discrete_obs(y));
    const double norm = lik.dot(pred);
    if (!(norm > kLikelihoodFloor))
      throw ZeroLikelihood("deviation bound: symbol " + std::to_string(y) +
                           " has zero mass under the predicted belief");
    const Vector post = lik.cwiseProduct(pred) / norm;
    const double center = model.g.dot(post);
    double hi = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < lik.size(); ++i) {
      const double h = lik[i] * (model.g[i] - center);
      hi = std::max(hi, h);
      lo = std::min(lo, h);
    }
    total += hi - lo;
  }
  return eps * total;
}

// One step of the sample-path error recursion for a filter run with the
// approximate kernel L against the exact one:
//   bound_k = eps / max{F(pi_prev, y) - eps, mu(y)} + rho(L) * prev / F,
//   F(pi, y) = 1'B_y L' pi / max_i B_iy,   mu(y) = min_i B_iy / max_i B_iy.
// `prev` is the error bound (or oracle error) carried from the previous
// step. Returns +infinity when the denominator degenerates to zero: the
// bound is then vacuous but still valid. The overload taking `rho` avoids
// recomputing the Dobrushin coefficient in per-step loops.
inline double samplepath_bound_step(double prev,
                                    const BeliefVector& lower_prev,
                                    const Observation& y,
                                    const TransitionMatrix& P_lower,
                                    const ObservationModel& obs, double eps,
                                    double rho) {
  if (!(prev >= 0.0))
    throw std::invalid_argument("samplepath: prev must be nonnegative");
  if (!(eps >= 0.0))
    throw std::invalid_argument("samplepath: eps must be nonnegative");
  if (lower_prev.size() != P_lower.size() ||
      lower_prev.size() != obs.state_count())
    throw DimensionMismatch("samplepath: belief and model sizes differ");
  const Vector lik = obs.likelihood(y);
  const double maxb = lik.maxCoeff();
  if (!(maxb > 0.0))
    throw DegenerateF("samplepath: symbol has zero likelihood in every state");
  const double mu = lik.minCoeff() / maxb;
  const Vector pred = P_lower.dense().transpose() * lower_prev.vec();
  const double F = lik.dot(pred) / maxb;
  if (!(F > 0.0))
    throw DegenerateF("samplepath: zero posterior mass for the symbol");
  const double denom = std::max(F - eps, mu);
  double bound = 0.0;
  if (eps > 0.0)
    bound = denom > 0.0 ? eps / denom
                        : std::numeric_limits<double>::infinity();
  if (rho > 0.0 && prev > 0.0) bound += rho * prev / F;
  return bound;
}

inline double samplepath_bound_step(double prev,
                                    const BeliefVector& lower_prev,
                                    const Observation& y,
                                    const TransitionMatrix& P_lower,
                                    const ObservationModel& obs, double eps) {
  return samplepath_bound_step(prev, lower_prev, y, P_lower, obs, eps,
                               dobrushin(P_lower));
}

// Per-step record of the error recursion along one observation path.
// `oracle_distance` is |pi_k - pi_lower_k|_1 when the exact kernel is
// available and NaN otherwise; `F` and `mu` are the step's recursion inputs.
struct BoundTraceRecord {
  int k = 0;
  double oracle_distance = std::numeric_limits<double>::quiet_NaN();
  double bound = 0.0;
  double F = 0.0;
  double mu = 0.0;
};

struct BoundTrace {
  double epsilon = 0.0;
  double rho_lower = 0.0;
  std::vector<BoundTraceRecord> records;
};

// OracleSeeded feeds each step the measured previous-step distance
// (validation); SelfRecursive feeds it the previous bound value
// (deployment). Both start from distance zero because the filters share the
// initial belief, and the recursion is monotone in that argument, so the
// self-recursive sequence always sits at or above the oracle-seeded one.
enum class TraceMode { OracleSeeded, SelfRecursive };

namespace detail {

inline BoundTrace samplepath_trace_core(const TransitionMatrix* P_true,
                                        const TransitionMatrix& P_lower,
                                        const ObservationModel& obs,
                                        const BeliefVector& pi0,
                                        const std::vector<Observation>& ys,
                                        double eps, TraceMode mode) {
  if (pi0.size() != P_lower.size() || pi0.size() != obs.state_count())
    throw DimensionMismatch("trace: belief and model sizes differ");
  if (P_true && P_true->size() != P_lower.size())
    throw DimensionMismatch("trace: kernel sizes differ");
  if (!P_true && mode == TraceMode::OracleSeeded)
    throw std::invalid_argument("trace: oracle seeding needs the exact kernel");
  if (!(eps >= 0.0))
    throw std::invalid_argument("trace: eps must be nonnegative");

  BoundTrace out;
  out.epsilon = eps;
  out.rho_lower = dobrushin(P_lower);
  out.records.reserve(ys.size());

  const Matrix& L = P_lower.dense();
  Vector lo = pi0.vec();
  Vector truth = pi0.vec();
  double prev = 0.0;  // both filters start from pi0
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const Vector lik = obs.likelihood(ys[k]);
    const double maxb = lik.maxCoeff();
    if (!(maxb > 0.0))
      throw DegenerateF("trace: symbol has zero likelihood in every state");
    const double mu = lik.minCoeff() / maxb;
    const Vector pred = L.transpose() * lo;
    const double F = lik.dot(pred) / maxb;
    if (!(F > 0.0))
      throw DegenerateF("trace: zero posterior mass for the symbol");
    const double denom = std::max(F - eps, mu);
    double bound = 0.0;
    if (eps > 0.0)
      bound = denom > 0.0 ? eps / denom
                          : std::numeric_limits<double>::infinity();
    if (out.rho_lower > 0.0 && prev > 0.0) bound += out.rho_lower * prev / F;

    Vector post = lik.cwiseProduct(pred);
    const double norm = post.sum();
    if (!(norm > kLikelihoodFloor))
      throw ZeroLikelihood("trace: lower filter normalizer below floor");
    lo = post / norm;

    double dist = std::numeric_limits<double>::quiet_NaN();
    if (P_true) {
      Vector tpost =
          lik.cwiseProduct(Vector(P_true->dense().transpose() * truth));
      const double tnorm = tpost.sum();
      if (!(tnorm > kLikelihoodFloor))
        throw ZeroLikelihood("trace: exact filter normalizer below floor");
      truth = tpost / tnorm;
      dist = (truth - lo).cwiseAbs().sum();
    }

    out.records.push_back(
        {static_cast<int>(k) + 1, dist, bound, F, mu});
    prev = (mode == TraceMode::OracleSeeded) ? dist : bound;
  }
  return out;
}

}  // namespace detail

// Error-recursion trace without the exact kernel: self-recursive bounds,
// oracle column NaN.
inline BoundTrace samplepath_bound_trace(const TransitionMatrix& P_lower,
                                         const ObservationModel& obs,
                                         const BeliefVector& pi0,
                                         const std::vector<Observation>& ys,
                                         double eps) {
  return detail::samplepath_trace_core(nullptr, P_lower, obs, pi0, ys, eps,
                                       TraceMode::SelfRecursive);
}

// Validation trace: also runs the exact filter and records the measured
// distance at every step.
inline BoundTrace samplepath_bound_trace(const TransitionMatrix& P_true,
                                         const TransitionMatrix& P_lower,
                                         const ObservationModel& obs,
                                         const BeliefVector& pi0,
                                         const std::vector<Observation>& ys,
                                         double eps, TraceMode mode) {
  return detail::samplepath_trace_core(&P_true, P_lower, obs, pi0, ys, eps,
                                       mode);
}

}  // namespace hmmbounds
