#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "archinf/nn.hpp"

namespace archinf::testutil {

// Central finite differences of a scalar function of a parameter vector.
inline Vec finite_difference(const std::function<double(const Vec&)>& f,
                             const Vec& x, double h = 1e-5) {
  Vec grad(x.size());
  Vec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// Max relative error between analytic and reference gradients, with an
// absolute floor so near-zero entries do not blow up the ratio.
inline double max_rel_error(const Vec& analytic, const Vec& reference,
                            double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(reference[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - reference[i]) / denom);
  }
  return worst;
}

}  // namespace archinf::testutil
