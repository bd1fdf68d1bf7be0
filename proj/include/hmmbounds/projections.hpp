#pragma once

// Euclidean projection operators used by the bound-construction solvers:
// probability simplex, l1 ball, halfspace/hyperplane, monotone cones
// (pool-adjacent-violators), cyclic projections with memory for
// intersections, and singular-value shrinkage/clipping for matrices.

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "errors.hpp"
#include "types.hpp"

namespace hmmbounds {

// Nearest point of the probability simplex {x >= 0, 1'x = 1}.
inline Vector project_simplex(const Vector& v) {
  const Eigen::Index n = v.size();
  if (n == 0) throw DimensionMismatch("project_simplex: empty vector");
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, tau = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    css += u[j];
    const double cand = (css - 1.0) / static_cast<double>(j + 1);
    if (u[j] - cand > 0.0) tau = cand;
  }
  return (v.array() - tau).cwiseMax(0.0).matrix();
}

// Nearest point of the l1 ball {x : ||x - center||_1 <= radius}.
inline Vector project_l1_ball(const Vector& v, const Vector& center,
                              double radius) {
  if (v.size() != center.size())
    throw DimensionMismatch("project_l1_ball: size mismatch");
  if (radius < 0.0)
    throw std::invalid_argument("project_l1_ball: negative radius");
  const Vector d = v - center;
  if (d.cwiseAbs().sum() <= radius) return v;
  if (radius == 0.0) return center;
  const Eigen::Index n = v.size();
  std::vector<double> u(n);
  for (Eigen::Index i = 0; i < n; ++i) u[i] = std::abs(d[i]);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    css += u[j];
    const double cand = (css - radius) / static_cast<double>(j + 1);
    if (u[j] - cand > 0.0) theta = cand;
  }
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mag = std::max(std::abs(d[i]) - theta, 0.0);
    out[i] = center[i] + (d[i] < 0.0 ? -mag : mag);
  }
  return out;
}

// Nearest point of the halfspace {x : a'x <= b}.
inline Vector project_halfspace(const Vector& v, const Vector& a, double b) {
  if (v.size() != a.size())
    throw DimensionMismatch("project_halfspace: size mismatch");
  const double viol = a.dot(v) - b;
  if (viol <= 0.0) return v;
  const double nrm2 = a.squaredNorm();
  if (nrm2 <= 0.0) throw Infeasible("project_halfspace: zero normal, a'x > b");
  return v - (viol / nrm2) * a;
}

// Nearest point of the hyperplane {x : a'x = b}.
inline Vector project_hyperplane(const Vector& v, const Vector& a, double b) {
  if (v.size() != a.size())
    throw DimensionMismatch("project_hyperplane: size mismatch");
  const double nrm2 = a.squaredNorm();
  if (nrm2 <= 0.0) {
    if (b == 0.0) return v;
    throw Infeasible("project_hyperplane: zero normal, b != 0");
  }
  return v - ((a.dot(v) - b) / nrm2) * a;
}

// Weighted least-squares fit with nonincreasing values (pool adjacent
// violators). Empty weights mean all ones.
inline Vector pava_nonincreasing(const Vector& v,
                                 const Vector& weights = Vector()) {
  const Eigen::Index n = v.size();
  if (weights.size() != 0 && weights.size() != n)
    throw DimensionMismatch("pava_nonincreasing: weight size mismatch");
  std::vector<double> mean;
  std::vector<double> wsum;
  std::vector<Eigen::Index> count;
  mean.reserve(n);
  wsum.reserve(n);
  count.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights.size() ? weights[i] : 1.0;
    if (w <= 0.0)
      throw std::invalid_argument("pava_nonincreasing: nonpositive weight");
    mean.push_back(v[i]);
    wsum.push_back(w);
    count.push_back(1);
    // A later block with a larger mean violates the nonincreasing shape;
    // merge until the stack of block means is nonincreasing again.
    while (mean.size() >= 2 && mean[mean.size() - 2] < mean.back()) {
      const double wa = wsum[wsum.size() - 2], wb = wsum.back();
      mean[mean.size() - 2] =
          (mean[mean.size() - 2] * wa + mean.back() * wb) / (wa + wb);
      wsum[wsum.size() - 2] = wa + wb;
      count[count.size() - 2] += count.back();
      mean.pop_back();
      wsum.pop_back();
      count.pop_back();
    }
  }
  Vector out(n);
  Eigen::Index pos = 0;
  for (std::size_t b = 0; b < mean.size(); ++b)
    for (Eigen::Index k = 0; k < count[b]; ++k) out[pos++] = mean[b];
  return out;
}

// Projection onto {x nonincreasing, x >= 0}. With a constant lower bound the
// clipped unconstrained fit is the exact constrained projection.
inline Vector project_nonincreasing_nonneg(const Vector& v,
                                           const Vector& weights = Vector()) {
  return pava_nonincreasing(v, weights).cwiseMax(0.0);
}

// Cyclic projections with per-set memory terms; converges to the projection
// onto the intersection for closed convex sets with nonempty intersection.
inline Vector dykstra(
    const Vector& v,
    const std::vector<std::function<Vector(const Vector&)>>& sets,
    int max_cycles = 200, double tol = 1e-13) {
  Vector x = v;
  std::vector<Vector> mem(sets.size(), Vector::Zero(v.size()));
  for (int cycle = 0; cycle < max_cycles; ++cycle) {
    // The iterate can sit still for whole cycles while the memory terms keep
    // moving (and the limit is not yet reached), so convergence is measured
    // on the memory increments as well as on the iterate.
    double delta = 0.0;
    for (std::size_t s = 0; s < sets.size(); ++s) {
      const Vector y = sets[s](x + mem[s]);
      const Vector mem_next = x + mem[s] - y;
      delta = std::max(delta, (mem_next - mem[s]).cwiseAbs().maxCoeff());
      delta = std::max(delta, (y - x).cwiseAbs().maxCoeff());
      mem[s] = mem_next;
      x = y;
    }
    if (delta < tol) break;
  }
  return x;
}

// Projection onto {x on the simplex, ||x - center||_1 <= radius}. The center
// is expected to lie on the simplex, so the set is nonempty.
inline Vector project_row_polytope(const Vector& v, const Vector& center,
                                   double radius, int max_cycles = 200,
                                   double tol = 1e-13) {
  if (v.size() != center.size())
    throw DimensionMismatch("project_row_polytope: size mismatch");
  if (radius < 0.0)
    throw std::invalid_argument("project_row_polytope: negative radius");
  if (radius < 1e-15) return center;
  Vector s = project_simplex(v);
  if ((s - center).cwiseAbs().sum() <= radius) return s;
  std::vector<std::function<Vector(const Vector&)>> sets;
  sets.push_back([](const Vector& y) { return project_simplex(y); });
  sets.push_back([&center, radius](const Vector& y) {
    return project_l1_ball(y, center, radius);
  });
  return dykstra(v, sets, max_cycles, tol);
}

// Soft-thresholds the singular values of a matrix by tau.
inline Matrix svt(const Matrix& a, double tau) {
  if (tau < 0.0) throw std::invalid_argument("svt: negative threshold");
  if (tau == 0.0) return a;
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector s = (svd.singularValues().array() - tau).cwiseMax(0.0).matrix();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

// Clips the singular values of a matrix at the given radius (projection onto
// the operator-norm ball).
inline Matrix project_spectral_ball(const Matrix& a, double radius = 1.0) {
  if (radius < 0.0)
    throw std::invalid_argument("project_spectral_ball: negative radius");
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues().size() == 0 ||
      svd.singularValues()[0] <= radius)
    return a;
  Vector s = svd.singularValues().cwiseMin(radius);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace hmmbounds
