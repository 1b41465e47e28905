// Central finite-difference gradient oracle shared by the test suites.
// Independent of the tape: it only re-evaluates a scalar function.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "vgnn/tensor.hpp"

namespace vgnn::testing {

// f maps a set of input matrices to a scalar. Returns the max relative error
// between analytic_grads and central differences with step h. The relative
// scale is clamped below so finite-difference roundoff on near-zero gradients
// does not dominate.
inline double fd_max_rel_err(
    const std::function<double(const std::vector<Matrix>&)>& f,
    std::vector<Matrix> inputs, const std::vector<Matrix>& analytic_grads,
    double h = 1e-5, double scale_floor = 1e-3) {
  double worst = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k](i);
      inputs[k](i) = orig + h;
      const double fp = f(inputs);
      inputs[k](i) = orig - h;
      const double fm = f(inputs);
      inputs[k](i) = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = analytic_grads[k](i);
      const double denom = std::max({std::abs(fd), std::abs(ad), scale_floor});
      worst = std::max(worst, std::abs(fd - ad) / denom);
    }
  }
  return worst;
}

}  // namespace vgnn::testing
