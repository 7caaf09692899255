// Neural-operator block family and network assembly.
//
// All variants share the same trunk: a k=2/s=2 downsampling conv that also
// lifts the input channels to width d, a stack of operator blocks, trilinear
// x2 upsampling, a pointwise output layer and per-label sigmoid. Variants
// differ in the block used:
//   fno       - per-mode complex spectral weights + W_t, no block skips
//   fnoseg    - shared complex spectral weights + W_t + block skips
//   hnoseg    - shared real Hartley weights (+ frequency-domain selu) + W_t
//               + block skips
//   hnoseg-xs - n_xs consecutive nonlinear residual Hartley convs bracketed
//               by one transform pair, block skips and U-Net skips

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hnoseg/autodiff.hpp"

namespace hnoseg::model {

enum class Variant { kFno, kFnoSeg, kHnoSeg, kHnoSegXs };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::kHnoSegXs;
  std::size_t d = 16;          // channel width
  std::size_t n_blocks = 8;    // n_B
  std::size_t n_xs = 1;        // frequency-domain convs per XS block
  std::array<std::size_t, 3> k_max = {6, 6, 6};
  std::size_t in_channels = 4;
  std::size_t num_labels = 3;
  // Ablation switch: drop the frequency-domain selu of the hnoseg block so
  // its spectral path is purely linear.
  bool spectral_nonlinearity = true;

  bool use_unet_skips() const { return variant == Variant::kHnoSegXs; }
  bool shared_weights() const { return variant != Variant::kFno; }
  bool has_block_skips() const { return variant != Variant::kFno; }
  bool has_wt() const { return variant != Variant::kHnoSegXs; }

  void validate() const;
  // Input constraint: spatial dims even and dim/2 >= 2*k_max per dimension.
  void check_input_dims(const Shape& input_shape) const;
};

std::size_t param_count(const ModelConfig& config);

struct ForwardResult {
  ad::Var output;                        // [num_labels, X, Y, Z] in (0,1)
  std::map<std::string, ad::Var> params; // leaves, for gradient readout
};

class Model {
 public:
  static Model build(const ModelConfig& config, std::uint64_t seed);
  static Model from_parts(const ModelConfig& config,
                          std::vector<std::pair<std::string, Tensor>> params);

  const ModelConfig& config() const { return config_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const {
    return params_;
  }
  std::vector<std::pair<std::string, Tensor>>& param_vec() { return params_; }
  Tensor& param(const std::string& name);
  std::vector<std::string> param_names() const;

  // Builds the forward graph on the given tape. with_grad controls whether
  // parameter leaves require gradients.
  ForwardResult forward(ad::Tape& tape, const Tensor& input,
                        bool with_grad) const;
  // Same, on an existing tape node (gradients can then flow to the input).
  ForwardResult forward(ad::Tape& tape, ad::Var input, bool with_grad) const;

  // Convenience inference: forward without gradients, returns scores.
  Tensor predict(const Tensor& input) const;

 private:
  ModelConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

}  // namespace hnoseg::model
