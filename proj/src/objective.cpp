#include "hnoseg/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hnoseg::objective {

ad::Var pcc_loss(ad::Var scores, const Tensor& truth, double eps) {
  const Tensor& p = scores.value();
  require_same_shape(p, truth, "pcc_loss");
  if (p.rank() < 2) {
    throw std::invalid_argument("pcc_loss: expected [L, ...voxels]");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < -1e-12 || p[i] > 1.0 + 1e-12) {
      throw std::invalid_argument("pcc_loss: score out of [0,1]: " +
                                  std::to_string(p[i]));
    }
    if (truth[i] != 0.0 && truth[i] != 1.0) {
      throw std::invalid_argument("pcc_loss: truth is not binary");
    }
  }
  ad::Tape& t = *scores.tape;
  const std::size_t labels = p.dim(0);
  const std::size_t nv = p.size() / labels;
  const double inv_nv = 1.0 / static_cast<double>(nv);

  ad::Var total = t.constant(Tensor::scalar(0.0));
  ad::Var rest = scores;
  for (std::size_t l = 0; l < labels; ++l) {
    ad::Var pl;
    if (l + 1 < labels) {
      auto [head, tail] = ad::split_channels(rest, 1);
      pl = head;
      rest = tail;
    } else {
      pl = rest;
    }
    // Centered truth for this label (constant).
    Shape ch_shape = pl.shape();
    Tensor yc(ch_shape);
    const double* y = truth.data() + l * nv;
    double ybar = 0.0;
    for (std::size_t i = 0; i < nv; ++i) ybar += y[i];
    ybar *= inv_nv;
    double vy = 0.0;
    for (std::size_t i = 0; i < nv; ++i) {
      yc[i] = y[i] - ybar;
      vy += yc[i] * yc[i];
    }
    ad::Var ycv = t.constant(std::move(yc));

    ad::Var pbar = ad::scale(ad::reduce_sum(pl), inv_nv);
    ad::Var pc = ad::add_scalar(pl, ad::neg(pbar));
    ad::Var cov = ad::reduce_sum(ad::mul(pc, ycv));
    ad::Var vp = ad::reduce_sum(ad::mul(pc, pc));
    ad::Var den = ad::sqrt(ad::add_const(ad::scale(vp, vy), eps));
    ad::Var pcc = ad::scale(ad::add_const(ad::div(cov, den), 1.0), 0.5);
    total = ad::add(total, ad::add_const(ad::neg(pcc), 1.0));
  }
  return ad::scale(total, 1.0 / static_cast<double>(labels));
}

std::vector<double> dice(const Tensor& scores, const Tensor& truth,
                         double threshold) {
  require_same_shape(scores, truth, "dice");
  const std::size_t labels = scores.dim(0);
  const std::size_t nv = scores.size() / labels;
  std::vector<double> out(labels);
  for (std::size_t l = 0; l < labels; ++l) {
    const double* p = scores.data() + l * nv;
    const double* y = truth.data() + l * nv;
    std::size_t inter = 0, np = 0, ny = 0;
    for (std::size_t i = 0; i < nv; ++i) {
      const bool pi = p[i] >= threshold;
      const bool yi = y[i] != 0.0;
      np += pi;
      ny += yi;
      inter += pi && yi;
    }
    out[l] = (np + ny == 0)
                 ? 1.0
                 : 2.0 * static_cast<double>(inter) /
                       static_cast<double>(np + ny);
  }
  return out;
}

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace hnoseg::objective
