// Training loop: per-channel z-score normalization, stochastic affine
// augmentation, Adamax with cosine-annealed learning rate, cross-resolution
// evaluation. Batch size is one; a fixed seed fully determines the run.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "hnoseg/model.hpp"
#include "hnoseg/synthdata.hpp"

namespace hnoseg::train {

struct TrainConfig {
  std::size_t epochs = 60;
  double lr_max = 5e-3;
  double lr_min = 1e-3;
  std::uint64_t seed = 0;
  bool augment = true;
  std::vector<std::size_t> eval_resolutions;

  void validate() const;
};

struct AdamaxState {
  std::map<std::string, Tensor> m;  // first moment
  std::map<std::string, Tensor> u;  // infinity norm
  std::size_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-channel zero mean / unit variance (variance floor 1e-8).
Tensor normalize_intensity(const Tensor& image);

// With probability 0.8: axial rotation +-30 deg, per-axis shift up to +-20%,
// isotropic scale in [0.8, 1.2]. Image resampled trilinearly (out-of-bounds
// filled with the channel mean), labels nearest-neighbor (filled with 0).
synth::Sample augment(const synth::Sample& sample, Rng& rng);

// m <- b1 m + (1-b1) g;  u <- max(b2 u, |g|);
// theta <- theta - lr * m / ((1 - b1^t) u + eps)
void adamax_step(std::vector<std::pair<std::string, Tensor>>& params,
                 const std::map<std::string, Tensor>& grads, AdamaxState& state,
                 double lr);

// lr_min + (lr_max-lr_min)(1+cos(pi*epoch/(epochs-1)))/2; single cycle.
double cosine_lr(std::size_t epoch, const TrainConfig& config);

struct EvalResult {
  std::vector<double> per_label_dice;
  double mean_dice = 0.0;
};

EvalResult evaluate(const model::Model& m,
                    const std::vector<synth::Sample>& samples);

// Re-rasterizes the scenes at `resolution` before scoring.
EvalResult evaluate_at(const model::Model& m,
                       const std::vector<synth::Scene>& scenes,
                       const synth::SceneSpec& spec, std::size_t resolution);

struct TrainMeta {
  std::size_t epochs_completed = 0;
  double final_lr = 0.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  model::Model trained;
  TrainMeta meta;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

// Runs epochs x passes of normalize -> augment -> forward -> pcc_loss ->
// backward -> adamax with cosine lr. `log`, when given, receives one JSON
// line per step and per epoch. Aborts with epoch/step info if the loss goes
// non-finite.
TrainResult train(const model::ModelConfig& mc, const TrainConfig& tc,
                  const std::vector<synth::Sample>& train_set,
                  const std::vector<synth::Sample>& val_set,
                  std::ostream* log = nullptr);

}  // namespace hnoseg::train
