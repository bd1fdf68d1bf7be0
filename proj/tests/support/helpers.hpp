#pragma once

// Shared test fixtures and independent reference computations. Reference
// (oracle) code here deliberately uses plain loops rather than the library's
// own kernels, so agreement is meaningful.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "hmmbounds/types.hpp"

namespace testsupport {

using hmmbounds::Matrix;
using hmmbounds::Vector;

// Random row-stochastic matrix with strictly positive entries.
inline Matrix random_stochastic(std::mt19937_64& rng, int n) {
  std::exponential_distribution<double> ex(1.0);
  Matrix P(n, n);
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int j = 0; j < n; ++j) {
      P(i, j) = ex(rng) + 1e-3;
      s += P(i, j);
    }
    P.row(i) /= s;
  }
  return P;
}

// Random strictly positive probability vector.
inline Vector random_simplex(std::mt19937_64& rng, int n) {
  std::exponential_distribution<double> ex(1.0);
  Vector p(n);
  double s = 0;
  for (int i = 0; i < n; ++i) {
    p[i] = ex(rng) + 1e-4;
    s += p[i];
  }
  return p / s;
}

// Random matrix whose rows walk a segment toward e_n: row_{i+1} =
// (1-kappa_i) row_i + kappa_i e_n. Adjacent rows are likelihood-ratio
// ordered by construction, so the matrix is totally positive of order 2.
inline Matrix random_tp2(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> kap(0.05, 0.6);
  Matrix P(n, n);
  P.row(0) = random_simplex(rng, n).transpose();
  for (int i = 1; i < n; ++i) {
    const double k = kap(rng);
    P.row(i) = (1.0 - k) * P.row(i - 1);
    P(i, n - 1) += k;
  }
  return P;
}

// Largest grid resolution N such that the simplex lattice {k/N} has at most
// `budget` points (binomial C(N+X-1, X-1)).
inline int grid_resolution(int X, long long budget = 10000) {
  int best = 1;
  for (int N = 1; N < 2000; ++N) {
    long long count = 1;
    for (int i = 1; i <= X - 1; ++i) {
      count = count * (N + i) / i;  // exact: product forms binomial stepwise
      if (count > budget) break;
    }
    if (count > budget) break;
    best = N;
  }
  return best;
}

// Minimum of pi' M pi over the lattice {pi = k/N : k in Z^X_{>=0}, sum k = N},
// evaluated with plain loops. Returns the min and (optionally) its argmin.
inline double grid_min_quadratic(const Matrix& M, int N, Vector* argmin = nullptr) {
  const int X = static_cast<int>(M.rows());
  std::vector<int> k(X, 0);
  Vector pi(X);
  double best = 1e300;
  // Odometer over compositions of N into X parts.
  auto eval = [&]() {
    for (int i = 0; i < X; ++i) pi[i] = static_cast<double>(k[i]) / N;
    double v = 0;
    for (int i = 0; i < X; ++i)
      for (int j = 0; j < X; ++j) v += pi[i] * M(i, j) * pi[j];
    if (v < best) {
      best = v;
      if (argmin) *argmin = pi;
    }
  };
  // Recursive enumeration without recursion: position stack.
  std::function<void(int, int)> rec = [&](int pos, int left) {
    if (pos == X - 1) {
      k[pos] = left;
      eval();
      return;
    }
    for (int c = 0; c <= left; ++c) {
      k[pos] = c;
      rec(pos + 1, left - c);
    }
  };
  rec(0, N);
  return best;
}

// Matrix exponential by scaling-and-squaring a truncated Taylor series.
// Reference-grade: after halving the infinity norm below 1/2, thirty series
// terms leave a remainder under 1e-40, so accuracy is set by rounding alone.
inline Matrix expm_taylor(Matrix M) {
  double nrm = 0.0;
  for (int i = 0; i < M.rows(); ++i) nrm = std::max(nrm, M.row(i).cwiseAbs().sum());
  int squarings = 0;
  while (nrm > 0.5) {
    nrm *= 0.5;
    ++squarings;
  }
  M /= std::pow(2.0, squarings);
  Matrix term = Matrix::Identity(M.rows(), M.cols());
  Matrix sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = (term * M) / static_cast<double>(k);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

// Plain-loop HMM filter update against a dense likelihood column.
// Returns the normalized posterior; writes the normalizer if asked.
inline Vector naive_filter_update(const Matrix& P, const Vector& lik,
                                  const Vector& pi, double* normalizer = nullptr) {
  const int n = static_cast<int>(pi.size());
  std::vector<double> pred(n, 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) pred[j] += P(i, j) * pi[i];
  double norm = 0.0;
  Vector post(n);
  for (int j = 0; j < n; ++j) {
    post[j] = lik[j] * pred[j];
    norm += post[j];
  }
  if (normalizer) *normalizer = norm;
  for (int j = 0; j < n; ++j) post[j] /= norm;
  return post;
}

}  // namespace testsupport
