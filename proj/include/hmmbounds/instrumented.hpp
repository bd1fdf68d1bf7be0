#pragma once
// Filter steps with operation counts. The returned values are delegated to
// the plain implementations, so counted and uncounted paths agree exactly;
// the counts are the multiplication and division totals of the canonical
// algorithms: factored prediction performs R (2X + 1) multiplies (an inner
// product and a scaled axpy per factor) plus X normalizing divides, dense
// prediction performs X^2 multiplies plus X divides, and the discrete
// correction touches only the stored support of the observation column
// (one multiply and one divide per supported state). The Gaussian
// correction standardizes, squares, and scales each state's density (two
// multiplies and one divide per state) before the product and the
// normalization.

#include <cstdint>
#include <variant>

#include "errors.hpp"
#include "filter.hpp"
#include "types.hpp"

namespace hmmbounds {

struct OpCounts {
  std::uint64_t multiplies = 0;
  std::uint64_t divides = 0;
  std::uint64_t total() const { return multiplies + divides; }
};

inline BeliefVector instrumented_predict(const TransitionMatrix& P,
                                         const BeliefVector& pi,
                                         OpCounts& counts) {
  BeliefVector out = predict(P, pi);
  const std::uint64_t X = static_cast<std::uint64_t>(pi.size());
  if (P.has_factorization())
    counts.multiplies += static_cast<std::uint64_t>(P.rank()) * (2 * X + 1);
  else
    counts.multiplies += X * X;
  counts.divides += X;
  return out;
}

inline FilterStep instrumented_bayes(const ObservationModel& obs,
                                     const BeliefVector& predicted,
                                     const Observation& y, OpCounts& counts) {
  FilterStep step = bayes_update(obs, predicted, y);
  const std::uint64_t X = static_cast<std::uint64_t>(predicted.size());
  if (obs.is_discrete()) {
    const int sym = std::get<int>(y);
    std::uint64_t nnz = 0;
    for (SparseMatrix::InnerIterator it(obs.likelihood_matrix(), sym - 1); it;
         ++it)
      ++nnz;
    counts.multiplies += nnz;
    counts.divides += nnz;
  } else {
    counts.multiplies += 3 * X;
    counts.divides += 2 * X;
  }
  return step;
}

inline FilterStep instrumented_filter_update(const HmmModel& model,
                                             const BeliefVector& pi,
                                             const Observation& y,
                                             OpCounts& counts) {
  const BeliefVector pred = instrumented_predict(model.P, pi, counts);
  return instrumented_bayes(model.obs, pred, y, counts);
}

}  // namespace hmmbounds
