#include "hnoseg/trainer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "hnoseg/objective.hpp"

namespace hnoseg::train {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (lr_min > lr_max) {
    throw std::invalid_argument("train: lr_min must be <= lr_max");
  }
}

Tensor normalize_intensity(const Tensor& image) {
  const std::size_t c = image.dim(0);
  const std::size_t s = image.size() / c;
  Tensor out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* in = image.data() + ch * s;
    double* o = out.data() + ch * s;
    double mean = 0.0;
    for (std::size_t i = 0; i < s; ++i) mean += in[i];
    mean /= static_cast<double>(s);
    double var = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      const double d = in[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(s);
    const double inv_std = 1.0 / std::sqrt(std::max(var, 1e-8));
    for (std::size_t i = 0; i < s; ++i) o[i] = (in[i] - mean) * inv_std;
  }
  return out;
}

namespace {

struct Affine {
  double cos_t, sin_t, inv_scale;
  std::array<double, 3> shift;

  // Inverse map: output world coord -> input world coord.
  std::array<double, 3> operator()(const std::array<double, 3>& q) const {
    std::array<double, 3> v = {(q[0] - 0.5 - shift[0]) * inv_scale,
                               (q[1] - 0.5 - shift[1]) * inv_scale,
                               (q[2] - 0.5 - shift[2]) * inv_scale};
    // Inverse axial rotation (about z).
    return {cos_t * v[0] + sin_t * v[1] + 0.5,
            -sin_t * v[0] + cos_t * v[1] + 0.5, v[2] + 0.5};
  }
};

}  // namespace

synth::Sample augment(const synth::Sample& sample, Rng& rng) {
  if (rng.uniform() >= 0.8) return sample;

  constexpr double kMaxAngle = 30.0 * std::numbers::pi / 180.0;
  const double theta = rng.uniform(-kMaxAngle, kMaxAngle);
  std::array<double, 3> shift = {rng.uniform(-0.2, 0.2),
                                 rng.uniform(-0.2, 0.2),
                                 rng.uniform(-0.2, 0.2)};
  const double scale = rng.uniform(0.8, 1.2);
  const Affine inv{std::cos(theta), std::sin(theta), 1.0 / scale, shift};

  const auto& res = sample.resolution;
  const std::size_t nx = res[0], ny = res[1], nz = res[2];
  const std::size_t vol = nx * ny * nz;
  synth::Sample out;
  out.scene_seed = sample.scene_seed;
  out.resolution = res;
  out.image = Tensor(sample.image.shape());
  out.labels = Tensor(sample.labels.shape());

  const std::size_t ci = sample.image.dim(0);
  const std::size_t cl = sample.labels.dim(0);
  std::vector<double> fill(ci);
  for (std::size_t c = 0; c < ci; ++c) {
    const double* in = sample.image.data() + c * vol;
    double m = 0.0;
    for (std::size_t i = 0; i < vol; ++i) m += in[i];
    fill[c] = m / static_cast<double>(vol);
  }

  const double dx = static_cast<double>(nx), dy = static_cast<double>(ny),
               dz = static_cast<double>(nz);
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t k = 0; k < nz; ++k) {
        const std::array<double, 3> q = {(i + 0.5) / dx, (j + 0.5) / dy,
                                         (k + 0.5) / dz};
        const auto p = inv(q);
        // Continuous voxel-index coordinates.
        const double fx = p[0] * dx - 0.5, fy = p[1] * dy - 0.5,
                     fz = p[2] * dz - 0.5;
        const std::size_t v = (i * ny + j) * nz + k;

        // Image: trilinear with channel-mean fill.
        const long x0 = static_cast<long>(std::floor(fx));
        const long y0 = static_cast<long>(std::floor(fy));
        const long z0 = static_cast<long>(std::floor(fz));
        const double wx = fx - x0, wy = fy - y0, wz = fz - z0;
        for (std::size_t c = 0; c < ci; ++c) {
          const double* in = sample.image.data() + c * vol;
          double acc = 0.0;
          for (int a = 0; a < 2; ++a) {
            const long xi = x0 + a;
            const double wxa = a ? wx : 1.0 - wx;
            for (int b = 0; b < 2; ++b) {
              const long yi = y0 + b;
              const double wyb = b ? wy : 1.0 - wy;
              for (int d = 0; d < 2; ++d) {
                const long zi = z0 + d;
                const double wzd = d ? wz : 1.0 - wz;
                const bool in_bounds = xi >= 0 && xi < static_cast<long>(nx) &&
                                       yi >= 0 && yi < static_cast<long>(ny) &&
                                       zi >= 0 && zi < static_cast<long>(nz);
                const double val =
                    in_bounds ? in[(static_cast<std::size_t>(xi) * ny +
                                    static_cast<std::size_t>(yi)) *
                                       nz +
                                   static_cast<std::size_t>(zi)]
                              : fill[c];
                acc += wxa * wyb * wzd * val;
              }
            }
          }
          out.image[c * vol + v] = acc;
        }

        // Labels: nearest-neighbor with zero fill.
        const long xn = static_cast<long>(std::lround(fx));
        const long yn = static_cast<long>(std::lround(fy));
        const long zn = static_cast<long>(std::lround(fz));
        const bool in_bounds = xn >= 0 && xn < static_cast<long>(nx) &&
                               yn >= 0 && yn < static_cast<long>(ny) &&
                               zn >= 0 && zn < static_cast<long>(nz);
        if (in_bounds) {
          const std::size_t src = (static_cast<std::size_t>(xn) * ny +
                                   static_cast<std::size_t>(yn)) *
                                      nz +
                                  static_cast<std::size_t>(zn);
          for (std::size_t c = 0; c < cl; ++c) {
            out.labels[c * vol + v] = sample.labels[c * vol + src];
          }
        }
      }
    }
  }
  return out;
}

void adamax_step(std::vector<std::pair<std::string, Tensor>>& params,
                 const std::map<std::string, Tensor>& grads, AdamaxState& state,
                 double lr) {
  state.t += 1;
  const double bias_correction =
      1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  for (auto& [name, theta] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) {
      throw std::invalid_argument("adamax: missing gradient for " + name);
    }
    const Tensor& g = git->second;
    require_same_shape(theta, g, "adamax");
    auto [mit, inserted_m] = state.m.try_emplace(name, Tensor(theta.shape()));
    auto [uit, inserted_u] = state.u.try_emplace(name, Tensor(theta.shape()));
    Tensor& m = mit->second;
    Tensor& u = uit->second;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      u[i] = std::max(state.beta2 * u[i], std::abs(g[i]));
      theta[i] -= lr * m[i] / (bias_correction * u[i] + state.eps);
    }
  }
}

double cosine_lr(std::size_t epoch, const TrainConfig& config) {
  if (epoch >= config.epochs) {
    throw std::invalid_argument("cosine_lr: epoch out of range");
  }
  if (config.epochs == 1) return config.lr_max;
  const double phase = std::numbers::pi * static_cast<double>(epoch) /
                       static_cast<double>(config.epochs - 1);
  return config.lr_min +
         0.5 * (config.lr_max - config.lr_min) * (1.0 + std::cos(phase));
}

EvalResult evaluate(const model::Model& m,
                    const std::vector<synth::Sample>& samples) {
  if (samples.empty()) return {};
  const std::size_t labels = samples.front().labels.dim(0);
  EvalResult res;
  res.per_label_dice.assign(labels, 0.0);
  for (const auto& s : samples) {
    Tensor pred = m.predict(normalize_intensity(s.image));
    auto d = objective::dice(pred, s.labels);
    for (std::size_t l = 0; l < labels; ++l) res.per_label_dice[l] += d[l];
  }
  double total = 0.0;
  for (auto& d : res.per_label_dice) {
    d /= static_cast<double>(samples.size());
    total += d;
  }
  res.mean_dice = total / static_cast<double>(labels);
  return res;
}

EvalResult evaluate_at(const model::Model& m,
                       const std::vector<synth::Scene>& scenes,
                       const synth::SceneSpec& spec, std::size_t resolution) {
  std::vector<synth::Sample> samples;
  samples.reserve(scenes.size());
  for (const auto& sc : scenes) {
    samples.push_back(
        synth::rasterize(sc, {resolution, resolution, resolution}, spec));
  }
  return evaluate(m, samples);
}

TrainResult train(const model::ModelConfig& mc, const TrainConfig& tc,
                  const std::vector<synth::Sample>& train_set,
                  const std::vector<synth::Sample>& val_set,
                  std::ostream* log) {
  mc.validate();
  tc.validate();
  if (train_set.empty()) {
    throw std::invalid_argument("train: empty training set");
  }
  for (const auto& s : train_set) mc.check_input_dims(s.image.shape());

  model::Model m = model::Model::build(mc, tc.seed);
  AdamaxState opt;
  Rng aug_rng(tc.seed, "augment");

  // Normalization is deterministic; do it once up front.
  std::vector<synth::Sample> normalized;
  normalized.reserve(train_set.size());
  for (const auto& s : train_set) {
    synth::Sample n = s;
    n.image = normalize_intensity(s.image);
    normalized.push_back(std::move(n));
  }

  TrainResult result{std::move(m), {0, 0.0, tc.seed}, {}};
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, tc);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < normalized.size(); ++i) {
      synth::Sample s =
          tc.augment ? augment(normalized[i], aug_rng) : normalized[i];
      ad::Tape tape;
      auto fwd = result.trained.forward(tape, s.image, /*with_grad=*/true);
      ad::Var loss = objective::pcc_loss(fwd.output, s.labels);
      const double loss_value = loss.value()[0];
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("train: loss diverged at epoch " +
                                 std::to_string(epoch) + " step " +
                                 std::to_string(step));
      }
      tape.backward(loss);
      std::map<std::string, Tensor> grads;
      for (const auto& [name, var] : fwd.params) {
        grads.emplace(name, tape.grad_or_zero(var.id));
      }
      adamax_step(result.trained.param_vec(), grads, opt, lr);
      loss_sum += loss_value;
      if (log != nullptr) {
        (*log) << "{\"epoch\":" << epoch << ",\"step\":" << step
               << ",\"lr\":" << lr << ",\"loss\":" << loss_value << "}\n";
      }
      ++step;
    }
    const double mean_loss = loss_sum / static_cast<double>(normalized.size());
    result.epoch_loss.push_back(mean_loss);
    if (log != nullptr) {
      (*log) << "{\"epoch\":" << epoch << ",\"mean_loss\":" << mean_loss;
      if (!val_set.empty()) {
        auto ev = evaluate(result.trained, val_set);
        (*log) << ",\"val_dice\":" << ev.mean_dice;
      }
      (*log) << "}\n" << std::flush;
    }
    result.meta.epochs_completed = epoch + 1;
    result.meta.final_lr = lr;
  }
  return result;
}

}  // namespace hnoseg::train
