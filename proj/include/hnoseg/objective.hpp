// Training loss and evaluation metrics.

#pragma once

#include <vector>

#include "hnoseg/autodiff.hpp"

namespace hnoseg::objective {

// Pearson-correlation loss, mean over labels of (1 - PCC_l) with
//   PCC_l = 0.5 * (cov / sqrt(varp * vary + eps) + 1)
// computed from centered sums. 0 = perfect, 0.5 = zero covariance,
// 1 = total disagreement. scores must lie in [0,1], truth in {0,1};
// differentiable w.r.t. scores.
ad::Var pcc_loss(ad::Var scores, const Tensor& truth, double eps = 1e-7);

// 2|P n Y| / (|P| + |Y|) per label on thresholded scores; 1.0 when both
// sets are empty.
std::vector<double> dice(const Tensor& scores, const Tensor& truth,
                         double threshold = 0.5);

double mse(const Tensor& a, const Tensor& b);

}  // namespace hnoseg::objective
