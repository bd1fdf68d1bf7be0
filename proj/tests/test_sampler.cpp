#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hmmbounds/bounds.hpp"
#include "hmmbounds/filter.hpp"
#include "hmmbounds/orders.hpp"
#include "hmmbounds/sampler.hpp"
#include "hmmbounds/simulate.hpp"
#include "support/helpers.hpp"

using namespace hmmbounds;
using testsupport::random_simplex;
using testsupport::random_stochastic;
using testsupport::random_tp2;

namespace {

Matrix chain3() {
  Matrix P(3, 3);
  P << 0.6, 0.3, 0.1, 0.3, 0.4, 0.3, 0.1, 0.3, 0.6;
  return P;
}

Matrix rank1_rows(const Vector& row) {
  Matrix M(row.size(), row.size());
  for (Eigen::Index i = 0; i < row.size(); ++i) M.row(i) = row.transpose();
  return M;
}

}  // namespace

TEST_CASE("importance distributions match their definitions") {
  const BeliefVector uni = BeliefVector::uniform(4);
  const Vector qu =
      importance_distribution(ImportanceChoice::Posterior, 2, uni);
  for (int i = 0; i < 4; ++i) CHECK(qu[i] == Catch::Approx(0.25).margin(1e-15));

  Vector pv(3);
  pv << 0.5, 0.2, 0.3;
  const BeliefVector prev(pv);
  const Vector qp =
      importance_distribution(ImportanceChoice::Posterior, 1, prev);
  for (int i = 0; i < 3; ++i)
    CHECK(qp[i] == Catch::Approx(prev[i]).margin(1e-15));

  // Identical rows make every column constant, so column weighting reduces
  // to the posterior choice.
  Vector row(3);
  row << 0.6, 0.3, 0.1;
  const auto R1 = TransitionMatrix::from_matrix(rank1_rows(row));
  for (int j = 1; j <= 3; ++j) {
    const Vector q =
        importance_distribution(ImportanceChoice::LowerWeighted, j, prev, &R1);
    for (int i = 0; i < 3; ++i)
      CHECK(q[i] == Catch::Approx(prev[i]).margin(1e-14));
  }

  // General column weighting, checked against a hand-normalized product.
  const auto C = TransitionMatrix::from_matrix(chain3());
  const Vector q2 =
      importance_distribution(ImportanceChoice::UpperWeighted, 2, prev, &C);
  Vector expect = C.dense().col(1).cwiseProduct(pv);
  expect /= expect.sum();
  for (int i = 0; i < 3; ++i)
    CHECK(q2[i] == Catch::Approx(expect[i]).margin(1e-14));

  // A zero column has no mass to weight: fall back to uniform.
  Matrix Z(3, 3);
  Z << 0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.5, 0.5, 0.0;
  const auto TZ = TransitionMatrix::from_matrix(Z);
  const Vector qz =
      importance_distribution(ImportanceChoice::LowerWeighted, 3, prev, &TZ);
  for (int i = 0; i < 3; ++i)
    CHECK(qz[i] == Catch::Approx(1.0 / 3.0).margin(1e-15));

  CHECK_THROWS_AS(importance_distribution(ImportanceChoice::Posterior, 0, prev),
                  IndexOutOfRange);
  CHECK_THROWS_AS(importance_distribution(ImportanceChoice::Posterior, 4, prev),
                  IndexOutOfRange);
  CHECK_THROWS_AS(
      importance_distribution(ImportanceChoice::LowerWeighted, 1, prev),
      std::invalid_argument);
}

TEST_CASE("constrained step with wide bounds reproduces the dense prediction") {
  Matrix Pm(2, 2);
  Pm << 0.9, 0.1, 0.2, 0.8;
  const auto P = TransitionMatrix::from_matrix(Pm);
  Matrix Bm(2, 2);
  Bm << 0.8, 0.2, 0.3, 0.7;
  const auto obs = ObservationModel::discrete(Bm);
  Vector pv(2);
  pv << 0.4, 0.6;
  const BeliefVector prev(pv);
  Vector lov(2), upv(2);
  lov << 0.95, 0.05;
  upv << 0.05, 0.95;
  const BeliefVector lower(lov), upper(upv);

  SamplerConfig cfg;
  cfg.iterations = 10000;
  cfg.seed = 71;
  const auto est =
      constrained_is_step(prev, lower, upper, discrete_obs(1), P, obs, cfg);

  const Vector dense = Pm.transpose() * pv;
  for (int j = 0; j < 2; ++j) {
    // Choice-1 weights are the column entries themselves; the analytic
    // standard error of their mean bounds the Monte-Carlo deviation.
    double second = 0.0;
    for (int i = 0; i < 2; ++i) second += pv[i] * Pm(i, j) * Pm(i, j);
    const double se = std::sqrt((second - dense[j] * dense[j]) / cfg.iterations);
    CHECK(std::abs(est.raw_predicted[j] - dense[j]) <= 3.0 * se + 1e-12);
    CHECK(est.acceptance_counts[static_cast<std::size_t>(j)] == cfg.iterations);
    CHECK_FALSE(est.coordinate_fallback[static_cast<std::size_t>(j)]);
    CHECK(std::abs(est.predicted[j] - dense[j]) < 0.02);
  }
  CHECK_FALSE(est.clipped);
  CHECK_FALSE(est.full_fallback);
  CHECK(est.alpha[0] == 0.0);
  CHECK(est.beta[0] == 1.0);
}

TEST_CASE("equal bounds force the common vector") {
  const auto P = TransitionMatrix::from_matrix(chain3());
  const Matrix Bm = Matrix::Identity(3, 3) * 0.7 +
                    (Matrix::Ones(3, 3) - Matrix::Identity(3, 3)) * 0.15;
  const auto obs = ObservationModel::discrete(Bm);
  Vector v(3);
  v << 0.5, 0.3, 0.2;
  const BeliefVector bound(v);

  SamplerConfig cfg;
  cfg.iterations = 200;
  cfg.seed = 7;
  const auto est = constrained_is_step(BeliefVector::uniform(3), bound, bound,
                                       discrete_obs(2), P, obs, cfg);

  for (int j = 0; j < 3; ++j)
    CHECK(est.predicted[j] == Catch::Approx(bound[j]).margin(1e-12));
  CHECK_FALSE(est.coordinate_fallback[0]);
  CHECK(est.coordinate_fallback[1]);
  CHECK(est.coordinate_fallback[2]);
  CHECK(est.clipped);
  CHECK(est.acceptance_counts[0] == cfg.iterations);
  CHECK(est.acceptance_counts[1] == 0);
  CHECK(est.acceptance_counts[2] == 0);

  const auto ref = bayes_update(obs, bound, discrete_obs(2));
  for (int j = 0; j < 3; ++j)
    CHECK(est.filtered[j] == Catch::Approx(ref.posterior[j]).margin(1e-12));
}

TEST_CASE("rejected indices are eliminated without biasing the estimate") {
  const auto P = TransitionMatrix::from_matrix(chain3());
  const auto obs = ObservationModel::discrete(Matrix::Constant(3, 3, 1.0 / 3.0));
  Vector pv(3), lov(3), upv(3);
  pv << 0.2, 0.5, 0.3;
  lov << 0.35, 0.38, 0.27;
  upv << 0.25, 0.38, 0.37;
  const BeliefVector prev(pv), lower(lov), upper(upv);

  SamplerConfig cfg;
  cfg.iterations = 5000;
  cfg.seed = 13;
  const auto est =
      constrained_is_step(prev, lower, upper, discrete_obs(1), P, obs, cfg);

  // Coordinate 1 accepts every draw (unit window, entries in [0,1]).
  CHECK(est.acceptance_counts[0] == cfg.iterations);
  const double m1 = est.raw_predicted[0];
  double second = 0.0, mean1 = 0.0;
  for (int i = 0; i < 3; ++i) {
    mean1 += pv[i] * chain3()(i, 0);
    second += pv[i] * chain3()(i, 0) * chain3()(i, 0);
  }
  const double se1 = std::sqrt((second - mean1 * mean1) / cfg.iterations);
  CHECK(std::abs(m1 - mean1) <= 4.0 * se1 + 1e-12);

  // Windows recomputed from the finalized coordinates must match.
  CHECK(est.alpha[1] == Catch::Approx(lov[1] * m1 / lov[0]).epsilon(1e-12));
  CHECK(est.beta[1] ==
        Catch::Approx(std::min(upv[1] * m1 / upv[0], 1.0 - upv[0]))
            .epsilon(1e-12));

  // For coordinate 2 only the middle state's weight 0.4 fits the window;
  // the other two indices are rejected once each and then never redrawn.
  CHECK(est.raw_predicted[1] == Catch::Approx(0.4).margin(1e-12));
  CHECK(est.acceptance_counts[1] >= cfg.iterations - 2);
  CHECK(est.acceptance_counts[1] <= cfg.iterations);
  // Same structure one coordinate later: only weight 0.3 fits.
  CHECK(est.raw_predicted[2] == Catch::Approx(0.3).margin(1e-12));
  CHECK(est.acceptance_counts[2] >= cfg.iterations - 2);

  CHECK_FALSE(est.clipped);
  CHECK_FALSE(est.full_fallback);
  CHECK(mlr_geq(est.predicted, lower, 1e-10));
  CHECK(mlr_geq(upper, est.predicted, 1e-10));
}

TEST_CASE("dominance windows cut the mean squared error") {
  std::mt19937_64 rng(99);
  const Matrix Pm = random_tp2(rng, 5);
  const auto P = TransitionMatrix::from_matrix(Pm);
  const auto pair = rank1_bounds(P);
  const auto obs = ObservationModel::discrete(Matrix::Constant(5, 5, 0.2));

  SamplerConfig con, unc;
  con.iterations = unc.iterations = 50;
  unc.constrained = false;

  double mse_con = 0.0, mse_unc = 0.0;
  int sandwich_failures = 0;
  const int reps = 500;
  for (int t = 0; t < reps; ++t) {
    const BeliefVector prev(random_simplex(rng, 5));
    const BeliefVector lo = predict(pair.lower, prev);
    const BeliefVector hi = predict(pair.upper, prev);
    const Vector dense = Pm.transpose() * prev.vec();
    con.seed = unc.seed = 1000 + static_cast<std::uint64_t>(t);
    const auto ec =
        constrained_is_step(prev, lo, hi, discrete_obs(3), P, obs, con);
    const auto eu =
        constrained_is_step(prev, lo, hi, discrete_obs(3), P, obs, unc);
    mse_con += (ec.predicted.vec() - dense).squaredNorm();
    mse_unc += (eu.predicted.vec() - dense).squaredNorm();
    if (!mlr_geq(ec.predicted, lo, 1e-10)) ++sandwich_failures;
    if (!mlr_geq(hi, ec.predicted, 1e-10)) ++sandwich_failures;
  }
  mse_con /= reps;
  mse_unc /= reps;
  CAPTURE(mse_con, mse_unc);
  CHECK(mse_con <= mse_unc);
  CHECK(sandwich_failures == 0);
}

TEST_CASE("fixed seed reproduces estimates exactly") {
  std::mt19937_64 rng(101);
  const Matrix Pm = random_tp2(rng, 4);
  const auto P = TransitionMatrix::from_matrix(Pm);
  const auto pair = rank1_bounds(P);
  const auto obs = ObservationModel::discrete(Matrix::Constant(4, 4, 0.25));
  const BeliefVector prev(random_simplex(rng, 4));
  const BeliefVector lo = predict(pair.lower, prev);
  const BeliefVector hi = predict(pair.upper, prev);

  SamplerConfig cfg;
  cfg.iterations = 100;
  cfg.seed = 2024;
  const auto a =
      constrained_is_step(prev, lo, hi, discrete_obs(2), P, obs, cfg);
  const auto b =
      constrained_is_step(prev, lo, hi, discrete_obs(2), P, obs, cfg);
  for (int j = 0; j < 4; ++j) {
    CHECK(a.predicted[j] == b.predicted[j]);
    CHECK(a.filtered[j] == b.filtered[j]);
    CHECK(a.acceptance_counts[static_cast<std::size_t>(j)] ==
          b.acceptance_counts[static_cast<std::size_t>(j)]);
  }

  cfg.seed = 2025;
  const auto c =
      constrained_is_step(prev, lo, hi, discrete_obs(2), P, obs, cfg);
  bool differs = false;
  for (int j = 0; j < 4; ++j)
    if (c.raw_predicted[j] != a.raw_predicted[j]) differs = true;
  CHECK(differs);
}

TEST_CASE("invalid sampler inputs are rejected") {
  const auto P = TransitionMatrix::from_matrix(chain3());
  const auto obs = ObservationModel::discrete(Matrix::Constant(3, 3, 1.0 / 3.0));
  Vector lov(3), upv(3);
  lov << 0.6, 0.3, 0.1;
  upv << 0.1, 0.3, 0.6;
  const BeliefVector lower(lov), upper(upv);
  const BeliefVector prev = BeliefVector::uniform(3);

  SamplerConfig cfg;
  // Bounds in the wrong order: the upper vector must dominate the lower.
  CHECK_THROWS_AS(
      constrained_is_step(prev, upper, lower, discrete_obs(1), P, obs, cfg),
      InvalidBounds);

  SamplerConfig bad = cfg;
  bad.iterations = 0;
  CHECK_THROWS_AS(
      constrained_is_step(prev, lower, upper, discrete_obs(1), P, obs, bad),
      std::invalid_argument);

  SamplerConfig weighted = cfg;
  weighted.q_choice = ImportanceChoice::LowerWeighted;
  CHECK_THROWS_AS(
      constrained_is_step(prev, lower, upper, discrete_obs(1), P, obs,
                          weighted),
      std::invalid_argument);

  const BeliefVector small = BeliefVector::uniform(2);
  CHECK_THROWS_AS(
      constrained_is_step(small, lower, upper, discrete_obs(1), P, obs, cfg),
      DimensionMismatch);
}

TEST_CASE("multiply count scales with states times iterations") {
  std::mt19937_64 rng(103);
  const Matrix Pm = random_tp2(rng, 6);
  const auto P = TransitionMatrix::from_matrix(Pm);
  const auto pair = rank1_bounds(P);
  const auto obs = ObservationModel::discrete(Matrix::Constant(6, 6, 1.0 / 6.0));
  const BeliefVector prev(random_simplex(rng, 6));
  const BeliefVector lo = predict(pair.lower, prev);
  const BeliefVector hi = predict(pair.upper, prev);

  SamplerConfig cfg;
  cfg.iterations = 40;
  std::uint64_t count = 0;
  constrained_is_step(prev, lo, hi, discrete_obs(1), P, obs, cfg, nullptr,
                      &count);
  const std::uint64_t X = 6, L = 40;
  CHECK(count > 0);
  // Two multiplies per draw for the weight, a handful per coordinate for
  // windows and clipping: comfortably linear in X*(L + 1).
  CHECK(count <= X * (2 * L + 8));
}

TEST_CASE("low rank factor estimator matches the dense product") {
  std::mt19937_64 rng(107);
  const Matrix Pm = random_tp2(rng, 4);
  const auto pair = lp_bounds(TransitionMatrix::from_matrix(Pm));
  auto L4 = TransitionMatrix::from_matrix(pair.lower.dense());
  L4.factor_from_svd(4);  // full-rank factorization: reconstruction is exact
  const auto obs = ObservationModel::discrete(Matrix::Constant(4, 4, 0.25));
  const BeliefVector prev(random_simplex(rng, 4));

  SamplerConfig cfg;
  cfg.iterations = 100000;
  cfg.seed = 5;
  const auto est = lowrank_is_step(prev, L4, discrete_obs(1), obs, cfg);
  const Vector dense = L4.dense().transpose() * prev.vec();

  // Analytic standard error of each raw coordinate from the per-factor
  // variances (independent streams), padded for the clip and renormalize.
  Vector var = Vector::Zero(4);
  for (const auto& f : L4.factors()) {
    double second = 0.0, mean = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double w = f.u[i];  // posterior choice cancels prev against q
      mean += prev[i] * w;
      second += prev[i] * w * w;
    }
    const double vr = (second - mean * mean) / cfg.iterations;
    for (int j = 0; j < 4; ++j)
      var[j] += f.sigma * f.sigma * f.v[j] * f.v[j] * vr;
  }
  double se_sum = 0.0;
  for (int j = 0; j < 4; ++j) se_sum += std::sqrt(var[j]);
  for (int j = 0; j < 4; ++j) {
    const double tol = 3.0 * (std::sqrt(var[j]) + se_sum) + 1e-12;
    CHECK(std::abs(est.predicted[j] - dense[j]) <= tol);
  }
}

TEST_CASE("rank one factorization pins the predicted direction") {
  Vector row(3);
  row << 0.6, 0.3, 0.1;
  auto R1 = TransitionMatrix::from_matrix(rank1_rows(row));
  R1.factor_from_svd(1);
  const auto obs = ObservationModel::discrete(Matrix::Constant(3, 3, 1.0 / 3.0));

  SamplerConfig cfg;
  cfg.iterations = 50;
  cfg.seed = 31;
  Vector p1(3), p2(3);
  p1 << 0.7, 0.2, 0.1;
  p2 << 0.05, 0.15, 0.8;
  const auto e1 = lowrank_is_step(BeliefVector(p1), R1, discrete_obs(2), obs, cfg);
  const auto e2 = lowrank_is_step(BeliefVector(p2), R1, discrete_obs(2), obs, cfg);
  for (int j = 0; j < 3; ++j) {
    CHECK(e1.predicted[j] == Catch::Approx(row[j]).margin(1e-12));
    CHECK(e2.predicted[j] == Catch::Approx(row[j]).margin(1e-12));
  }
}

TEST_CASE("factor estimates are unbiased for the dense inner product") {
  std::mt19937_64 rng(109);
  const Matrix Pm = random_tp2(rng, 4);
  auto T4 = TransitionMatrix::from_matrix(Pm);
  T4.factor_from_svd(2);
  const auto obs = ObservationModel::discrete(Matrix::Constant(4, 4, 0.25));
  const BeliefVector prev(random_simplex(rng, 4));

  SamplerConfig cfg;
  cfg.iterations = 10;
  const int reps = 10000;
  const int R = static_cast<int>(T4.factors().size());
  Vector mean = Vector::Zero(R), second = Vector::Zero(R);
  for (int t = 0; t < reps; ++t) {
    cfg.seed = 40000 + static_cast<std::uint64_t>(t);
    const auto est = lowrank_is_step(prev, T4, discrete_obs(3), obs, cfg);
    for (int r = 0; r < R; ++r) {
      mean[r] += est.factor_estimates[r];
      second[r] += est.factor_estimates[r] * est.factor_estimates[r];
    }
  }
  for (int r = 0; r < R; ++r) {
    mean[r] /= reps;
    const double var = second[r] / reps - mean[r] * mean[r];
    const double se = std::sqrt(var / reps);
    const double dense = T4.factors()[static_cast<std::size_t>(r)].u.dot(
        prev.vec());
    CHECK(std::abs(mean[r] - dense) <= 4.0 * se + 1e-12);
  }
}

TEST_CASE("low rank step validates its inputs") {
  const auto bare = TransitionMatrix::from_matrix(chain3());
  const auto obs = ObservationModel::discrete(Matrix::Constant(3, 3, 1.0 / 3.0));
  SamplerConfig cfg;
  CHECK_THROWS_AS(
      lowrank_is_step(BeliefVector::uniform(3), bare, discrete_obs(1), obs, cfg),
      std::invalid_argument);

  auto F = TransitionMatrix::from_matrix(chain3());
  F.factor_from_svd(3);
  SamplerConfig bad;
  bad.iterations = 0;
  CHECK_THROWS_AS(
      lowrank_is_step(BeliefVector::uniform(3), F, discrete_obs(1), obs, bad),
      std::invalid_argument);
  CHECK_THROWS_AS(
      lowrank_is_step(BeliefVector::uniform(2), F, discrete_obs(1), obs, cfg),
      DimensionMismatch);

  // A point-mass previous estimate samples one index only, making the factor
  // estimates exact: the step reproduces the matching row.
  const auto est =
      lowrank_is_step(BeliefVector::unit(3, 1), F, discrete_obs(1), obs, cfg);
  for (int j = 0; j < 3; ++j)
    CHECK(est.predicted[j] == Catch::Approx(chain3()(0, j)).margin(1e-10));
}

TEST_CASE("optimal importance oracle never increases variance") {
  std::mt19937_64 seedgen(211);
  const Matrix P = random_stochastic(seedgen, 10);
  const Vector pi = random_simplex(seedgen, 10);
  const int L = 20, reps = 1000;

  for (int j = 0; j < 10; ++j) {
    // Choice 1: sample states from the previous estimate itself.
    const Vector q1 = pi;
    // Oracle choice: proportional to the integrand, known to be
    // variance-optimal for importance sampling of a positive sum.
    Vector q2 = P.col(j).cwiseProduct(pi);
    q2 /= q2.sum();

    double m1 = 0, s1 = 0, m2 = 0, s2 = 0;
    for (int t = 0; t < reps; ++t) {
      Rng r1(split_seed(5000 + static_cast<std::uint64_t>(t), 1));
      Rng r2(split_seed(5000 + static_cast<std::uint64_t>(t), 2));
      double a1 = 0, a2 = 0;
      for (int l = 0; l < L; ++l) {
        const int i1 = sample_categorical(r1, q1);
        a1 += P(i1, j) * pi[i1] / q1[i1];
        const int i2 = sample_categorical(r2, q2);
        a2 += P(i2, j) * pi[i2] / q2[i2];
      }
      a1 /= L;
      a2 /= L;
      m1 += a1;
      s1 += a1 * a1;
      m2 += a2;
      s2 += a2 * a2;
    }
    const double var1 = s1 / reps - (m1 / reps) * (m1 / reps);
    const double var2 = s2 / reps - (m2 / reps) * (m2 / reps);
    CHECK(var2 <= var1 + 1e-12);
  }
}
