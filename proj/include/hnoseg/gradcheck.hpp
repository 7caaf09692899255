// Central finite-difference verification of tape gradients.
//
// The caller provides a builder that reconstructs the scalar loss from leaf
// tensors; the checker perturbs every element with step 1e-6*(1+|x|) and
// compares the central difference against the tape gradient.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hnoseg/autodiff.hpp"

namespace hnoseg::gradcheck {

using LossBuilder =
    std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct Report {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double rel_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / denom;
}

inline Report check(const LossBuilder& build, std::vector<Tensor> inputs,
                    double step = 1e-6) {
  auto eval = [&](const std::vector<Tensor>& xs) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    leaves.reserve(xs.size());
    for (const auto& x : xs) leaves.push_back(tape.leaf(x, true));
    return build(tape, leaves).value()[0];
  };

  // Tape gradients.
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x, true));
  ad::Var loss = build(tape, leaves);
  tape.backward(loss);
  std::vector<Tensor> grads;
  for (const auto& v : leaves) grads.push_back(tape.grad_or_zero(v.id));

  Report rep;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::size_t i = 0; i < inputs[t].size(); ++i) {
      const double x0 = inputs[t][i];
      const double h = step * (1.0 + std::abs(x0));
      inputs[t][i] = x0 + h;
      const double fp = eval(inputs);
      inputs[t][i] = x0 - h;
      const double fm = eval(inputs);
      inputs[t][i] = x0;
      const double fd = (fp - fm) / (2.0 * h);
      rep.max_rel_error =
          std::max(rep.max_rel_error, rel_error(grads[t][i], fd));
      ++rep.checked;
    }
  }
  return rep;
}

}  // namespace hnoseg::gradcheck
