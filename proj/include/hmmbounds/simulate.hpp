#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "filter.hpp"
#include "types.hpp"

namespace hmmbounds {

// splitmix64 step; used to derive independent substream seeds so results do
// not depend on call interleaving.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

// Sample a 0-based index from an unnormalized nonnegative weight vector.
inline int sample_categorical(Rng& rng, const Vector& w) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] < 0) throw DegenerateDistribution("sample: negative weight");
    total += w[i];
  }
  if (!(total > 0)) throw DegenerateDistribution("sample: zero total mass");
  std::uniform_real_distribution<double> unif(0.0, total);
  double u = unif(rng);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    u -= w[i];
    if (u <= 0) return static_cast<int>(i);
  }
  return static_cast<int>(w.size() - 1);  // guard against rounding spill
}

// Uniform sample from the probability simplex (normalized exponentials).
inline BeliefVector random_belief(Rng& rng, int states) {
  std::exponential_distribution<double> ex(1.0);
  Vector p(states);
  for (int i = 0; i < states; ++i) p[i] = ex(rng);
  return BeliefVector::normalized(std::move(p));
}

struct SamplePath {
  std::vector<int> states;              // 1-based, length T
  std::vector<Observation> observations;  // length T, y_k emitted from x_k
};

// Simulate `steps` transitions of the chain: x_0 ~ pi0, then for k = 1..steps
// draw x_k ~ P(x_{k-1}, .) and emit y_k ~ B(x_k, .). State and observation
// noise use separate derived streams, so paths are reproducible from `seed`
// alone regardless of observation kind.
inline SamplePath simulate(const HmmModel& model, const BeliefVector& pi0,
                           int steps, std::uint64_t seed) {
  if (pi0.size() != model.size())
    throw DimensionMismatch("simulate: prior size != model size");
  Rng state_rng(split_seed(seed, 0));
  Rng obs_rng(split_seed(seed, 1));
  SamplePath path;
  path.states.reserve(steps);
  path.observations.reserve(steps);
  int x = sample_categorical(state_rng, pi0.vec()) + 1;  // x_0 ~ pi0
  const bool disc = model.obs.is_discrete();
  Eigen::SparseMatrix<double, Eigen::RowMajor> Brows;
  if (disc) Brows = model.obs.likelihood_matrix();
  std::normal_distribution<double> gauss(0.0, disc ? 1.0 : model.obs.sigma());
  for (int k = 0; k < steps; ++k) {
    x = sample_categorical(state_rng, model.P.dense().row(x - 1).transpose()) + 1;
    path.states.push_back(x);
    if (disc) {
      Vector row = Vector::Zero(model.obs.symbol_count());
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Brows, x - 1);
           it; ++it)
        row[it.col()] = it.value();
      path.observations.push_back(discrete_obs(sample_categorical(obs_rng, row) + 1));
    } else {
      path.observations.push_back(real_obs(model.obs.levels()[x - 1] + gauss(obs_rng)));
    }
  }
  return path;
}

}  // namespace hmmbounds
