#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "hmmbounds/copositivity.hpp"
#include "hmmbounds/filter.hpp"
#include "hmmbounds/orders.hpp"
#include "support/helpers.hpp"

using namespace hmmbounds;
using testsupport::grid_min_quadratic;
using testsupport::grid_resolution;
using testsupport::random_simplex;
using testsupport::random_stochastic;
using testsupport::random_tp2;

namespace {

double loop_quad(const Matrix& M, const Vector& p) {
  double v = 0;
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j) v += p[i] * M(i, j) * p[j];
  return v;
}

Matrix rank1_rows(const Matrix& P, int row) {
  Matrix Q(P.rows(), P.cols());
  for (int i = 0; i < P.rows(); ++i) Q.row(i) = P.row(row);
  return Q;
}

}  // namespace

TEST_CASE("M combinations vanish when the two matrices coincide") {
  std::mt19937_64 rng(31);
  Matrix P = random_stochastic(rng, 5);
  for (int m = 1; m <= 4; ++m)
    CHECK(build_M(P, P, m).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("M combinations are symmetric and match the scalar expansion") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 4);
    Matrix P = random_stochastic(rng, n);
    Matrix Q = (trial % 3 == 0) ? rank1_rows(P, 0) : random_stochastic(rng, n);
    for (int m = 1; m < n; ++m) {
      Matrix M = build_M(Q, P, m);
      CHECK((M - M.transpose()).cwiseAbs().maxCoeff() == 0.0);
      Vector pi = random_simplex(rng, n);
      // pi'M pi = 2 [ (Q'pi)_m (P'pi)_{m+1} - (P'pi)_m (Q'pi)_{m+1} ]
      Vector qp = Q.transpose() * pi, pp = P.transpose() * pi;
      const double expect = 2.0 * (qp[m - 1] * pp[m] - pp[m - 1] * qp[m]);
      CHECK(loop_quad(M, pi) == Catch::Approx(expect).margin(1e-13));
    }
  }
}

TEST_CASE("column index is validated") {
  Matrix P = Matrix::Identity(3, 3);
  CHECK_THROWS_AS(build_M(P, P, 0), IndexOutOfRange);
  CHECK_THROWS_AS(build_M(P, P, 3), IndexOutOfRange);
}

TEST_CASE("entrywise nonnegative matrices certify at the root") {
  std::mt19937_64 rng(33);
  Matrix M = Matrix::Random(5, 5).cwiseAbs();
  M = 0.5 * (M + M.transpose()).eval();
  auto v = copositivity_verdict(M);
  CHECK(v.status == CopositivityStatus::Certified);
  CHECK(v.max_depth_seen == 0);
  CHECK(v.certificate.cells.size() == 1);
}

TEST_CASE("negated identity is refuted with the first vertex") {
  auto v = copositivity_verdict(Matrix(-Matrix::Identity(3, 3)));
  REQUIRE(v.status == CopositivityStatus::Refuted);
  CHECK(v.witness_value == Catch::Approx(-1.0));
  CHECK(v.witness[0] == Catch::Approx(1.0));
}

TEST_CASE("documented 2x2 indefinite example refutes at the edge midpoint") {
  Matrix M(2, 2);
  M << 1, -2, -2, 1;
  auto v = copositivity_verdict(M);
  REQUIRE(v.status == CopositivityStatus::Refuted);
  CHECK(v.witness[0] == Catch::Approx(0.5));
  CHECK(v.witness[1] == Catch::Approx(0.5));
  CHECK(v.witness_value == Catch::Approx(-0.5));
}

TEST_CASE("boundary copositive matrix needs one bisection") {
  Matrix M(2, 2);
  M << 1, -1, -1, 1;  // pi'M pi = (pi1 - pi2)^2 >= 0
  auto v = copositivity_verdict(M);
  REQUIRE(v.status == CopositivityStatus::Certified);
  CHECK(v.max_depth_seen >= 1);
  for (double m : v.cell_min) CHECK(m >= -1e-12);
}

TEST_CASE("interior dip away from the midpoint is still refuted") {
  Matrix M(2, 2);
  M << 4, -1, -1, 0.24;  // negative only on t in (1/6, 3/13), min ~ -0.0064
  auto v = copositivity_verdict(M);
  REQUIRE(v.status == CopositivityStatus::Refuted);
  CHECK(v.witness_value < -1e-12);
  CHECK(loop_quad(M, v.witness) == Catch::Approx(v.witness_value).margin(1e-14));
  CHECK(v.witness.minCoeff() >= 0.0);
  CHECK(v.witness.sum() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("verdicts are sound against a dense grid oracle") {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int certified = 0, refuted = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 5);
    Matrix M(n, n);
    if (trial % 3 == 0) {
      Matrix A(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = u(rng);
      M = A.transpose() * A;  // PSD, hence copositive
    } else {
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) M(i, j) = M(j, i) = u(rng);
    }
    auto v = copositivity_verdict(M);
    if (v.status == CopositivityStatus::Certified) {
      ++certified;
      CHECK(grid_min_quadratic(M, grid_resolution(n, 3000)) >= -1e-9);
    } else if (v.status == CopositivityStatus::Refuted) {
      ++refuted;
      CHECK(v.witness.minCoeff() >= 0.0);
      CHECK(v.witness.sum() == Catch::Approx(1.0).margin(1e-12));
      CHECK(loop_quad(M, v.witness) < -1e-12);
    }
  }
  CHECK(certified > 10);
  CHECK(refuted > 10);
}

TEST_CASE("matrix ordering: reflexive, rank-1 certified, reversed refuted") {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 4);
    Matrix P = random_tp2(rng, n);
    CHECK(copositive_order(P, P).certified());
    Matrix lower = rank1_rows(P, 0);
    CHECK(copositive_order(lower, P).certified());
    Matrix upper = rank1_rows(P, n - 1);
    auto rev = copositive_order(upper, P);
    REQUIRE(rev.status == CopositivityStatus::Refuted);
    CHECK(rev.refuted_m == n - 1);  // proportional leading columns: earlier m vanish
    const auto& w = rev.per_m.back();
    CHECK(loop_quad(build_M(upper, P, rev.refuted_m), w.witness) < -1e-12);
  }
}

TEST_CASE("ordering is transitive on nested rank-1 constructions") {
  std::mt19937_64 rng(36);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 4);
    Matrix P = random_tp2(rng, n);
    Matrix Q = rank1_rows(P, 0);
    // Push a further rank-1 matrix below Q by a decreasing ratio reweight.
    Vector r = Q.row(0).transpose();
    Vector rho(n);
    double acc = 2.0;
    std::uniform_real_distribution<double> u(0.05, 0.5);
    for (int i = 0; i < n; ++i) {
      rho[i] = acc;
      acc -= u(rng) * acc * 0.5;
    }
    Vector rr = r.cwiseProduct(rho);
    rr /= rr.sum();
    Matrix R(n, n);
    for (int i = 0; i < n; ++i) R.row(i) = rr.transpose();
    CHECK(copositive_order(R, Q).certified());
    CHECK(copositive_order(Q, P).certified());
    CHECK(copositive_order(R, P).certified());
  }
}

TEST_CASE("certified ordering transfers to MLR-ordered filter updates") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 4);
    Matrix P = random_tp2(rng, n);
    Matrix Q = rank1_rows(P, 0);
    REQUIRE(copositive_order(Q, P).certified());
    Matrix B = random_stochastic(rng, n);
    auto mp = HmmModel::make(TransitionMatrix::from_matrix(P),
                             ObservationModel::discrete(B));
    auto mq = HmmModel::make(TransitionMatrix::from_matrix(Q),
                             ObservationModel::discrete(B));
    for (int k = 0; k < 100; ++k) {
      BeliefVector pi(random_simplex(rng, n));
      const int y = 1 + static_cast<int>(rng() % n);
      auto fp = filter_update(mp, pi, discrete_obs(y));
      auto fq = filter_update(mq, pi, discrete_obs(y));
      CHECK(mlr_geq(fp.posterior, fq.posterior, 1e-12));
    }
  }
}
