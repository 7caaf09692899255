#include "hnoseg/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "hnoseg/rng.hpp"
#include "hnoseg/spectral.hpp"

namespace hnoseg::model {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kFno: return "fno";
    case Variant::kFnoSeg: return "fnoseg";
    case Variant::kHnoSeg: return "hnoseg";
    case Variant::kHnoSegXs: return "hnoseg-xs";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "fno") return Variant::kFno;
  if (name == "fnoseg") return Variant::kFnoSeg;
  if (name == "hnoseg") return Variant::kHnoSeg;
  if (name == "hnoseg-xs") return Variant::kHnoSegXs;
  throw std::invalid_argument("unknown model variant: " + name);
}

void ModelConfig::validate() const {
  if (d < 1) throw std::invalid_argument("model: d must be >= 1");
  if (n_blocks < 1) throw std::invalid_argument("model: n_blocks must be >= 1");
  if (n_xs < 1) throw std::invalid_argument("model: n_xs must be >= 1");
  if (variant != Variant::kHnoSegXs && n_xs != 1) {
    throw std::invalid_argument("model: n_xs > 1 only valid for hnoseg-xs");
  }
  if (in_channels < 1 || num_labels < 1) {
    throw std::invalid_argument("model: channel/label counts must be >= 1");
  }
  for (std::size_t k : k_max) {
    if (k < 1) throw std::invalid_argument("model: k_max entries must be >= 1");
  }
}

void ModelConfig::check_input_dims(const Shape& s) const {
  if (s.size() != 4 || s[0] != in_channels) {
    throw std::invalid_argument("model: input must be [" +
                                std::to_string(in_channels) + ",X,Y,Z], got " +
                                shape_str(s));
  }
  for (int a = 0; a < 3; ++a) {
    if (s[a + 1] % 2 != 0) {
      throw std::invalid_argument("model: input spatial dims must be even, " +
                                  shape_str(s));
    }
    if (s[a + 1] / 2 < 2 * k_max[a]) {
      throw std::invalid_argument(
          "model: k_max " + std::to_string(k_max[a]) + " exceeds band of " +
          "post-downsample dim " + std::to_string(s[a + 1] / 2));
    }
  }
}

namespace {

std::size_t band_modes(const ModelConfig& c) {
  return 8 * c.k_max[0] * c.k_max[1] * c.k_max[2];
}

// Parameter shape list shared by build() and param_count().
std::vector<std::pair<std::string, Shape>> param_shapes(const ModelConfig& c) {
  const std::size_t d = c.d;
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("input_conv.weight", Shape{d, c.in_channels, 2, 2, 2});
  out.emplace_back("input_conv.bias", Shape{d});
  for (std::size_t t = 0; t < c.n_blocks; ++t) {
    const std::string p = "block" + std::to_string(t) + ".";
    if (c.has_wt()) {
      out.emplace_back(p + "w.weight", Shape{d, d});
      out.emplace_back(p + "w.bias", Shape{d});
    }
    switch (c.variant) {
      case Variant::kFno:
        out.emplace_back(p + "spectral0.re",
                         Shape{d, d, 2 * c.k_max[0], 2 * c.k_max[1],
                               2 * c.k_max[2]});
        out.emplace_back(p + "spectral0.im",
                         Shape{d, d, 2 * c.k_max[0], 2 * c.k_max[1],
                               2 * c.k_max[2]});
        break;
      case Variant::kFnoSeg:
        out.emplace_back(p + "spectral0.re", Shape{d, d});
        out.emplace_back(p + "spectral0.im", Shape{d, d});
        break;
      case Variant::kHnoSeg:
        out.emplace_back(p + "spectral0.weight", Shape{d, d});
        break;
      case Variant::kHnoSegXs:
        for (std::size_t j = 0; j < c.n_xs; ++j) {
          out.emplace_back(p + "spectral" + std::to_string(j) + ".weight",
                           Shape{d, d});
        }
        break;
    }
    if (c.has_block_skips()) {
      out.emplace_back(p + "skip.weight", Shape{d, 2 * d});
      out.emplace_back(p + "skip.bias", Shape{d});
    }
    if (c.use_unet_skips() && t >= c.n_blocks - c.n_blocks / 2 &&
        c.n_blocks > 1) {
      out.emplace_back(p + "unet.weight", Shape{d, 2 * d});
      out.emplace_back(p + "unet.bias", Shape{d});
    }
  }
  out.emplace_back("output.weight", Shape{c.num_labels, d});
  out.emplace_back("output.bias", Shape{c.num_labels});
  return out;
}

std::size_t fan_in_of(const std::string& name, const Shape& s,
                      const ModelConfig& c) {
  if (name == "input_conv.weight") return c.in_channels * 8;
  if (name.find("spectral") != std::string::npos) return c.d;
  (void)s;
  // Pointwise layers: fan-in is the input channel count, dim 1.
  return s.size() >= 2 ? s[1] : s[0];
}

}  // namespace

std::size_t param_count(const ModelConfig& config) {
  config.validate();
  std::size_t n = 0;
  for (const auto& [name, shape] : param_shapes(config)) n += numel(shape);
  return n;
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  Rng rng(seed, "init");
  for (const auto& [name, shape] : param_shapes(config)) {
    Tensor t(shape);
    const bool is_bias = name.ends_with(".bias");
    if (!is_bias) {
      const double stddev =
          1.0 / std::sqrt(static_cast<double>(fan_in_of(name, shape, config)));
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
    }
    m.params_.emplace_back(name, std::move(t));
  }
  // Audit: the closed-form count must equal what was registered.
  std::size_t total = 0;
  for (const auto& [name, t] : m.params_) total += t.size();
  if (total != param_count(config)) {
    throw std::logic_error("model: parameter audit failed");
  }
  return m;
}

Model Model::from_parts(const ModelConfig& config,
                        std::vector<std::pair<std::string, Tensor>> params) {
  config.validate();
  auto expected = param_shapes(config);
  if (params.size() != expected.size()) {
    throw std::invalid_argument("model: checkpoint has " +
                                std::to_string(params.size()) +
                                " tensors, config expects " +
                                std::to_string(expected.size()));
  }
  // Compare name sets (order-insensitive) and shapes.
  auto sorted = params;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  auto exp_sorted = expected;
  std::sort(exp_sorted.begin(), exp_sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].first != exp_sorted[i].first) {
      throw std::invalid_argument(
          "model: parameter name mismatch, checkpoint has '" +
          sorted[i].first + "' where config expects '" +
          exp_sorted[i].first + "'");
    }
    if (sorted[i].second.shape() != exp_sorted[i].second) {
      throw std::invalid_argument("model: shape mismatch for '" +
                                  sorted[i].first + "'");
    }
  }
  Model m;
  m.config_ = config;
  // Keep canonical order.
  for (const auto& [name, shape] : expected) {
    for (auto& [pname, pt] : params) {
      if (pname == name) {
        m.params_.emplace_back(name, std::move(pt));
        break;
      }
    }
  }
  return m;
}

Tensor& Model::param(const std::string& name) {
  for (auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw std::out_of_range("model: no parameter named " + name);
}

std::vector<std::string> Model::param_names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [n, t] : params_) out.push_back(n);
  return out;
}

namespace {

using ad::Var;
namespace sp = spectral;

struct ParamVars {
  std::map<std::string, Var> vars;
  Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) {
      throw std::out_of_range("forward: missing parameter " + name);
    }
    return it->second;
  }
  bool has(const std::string& name) const { return vars.count(name) != 0; }
};

Var fno_block(const ModelConfig& c, Var u, const ParamVars& pv,
              const std::string& p) {
  sp::SpectrumComplex spec =
      sp::mode_crop(sp::dft_forward(u), c.k_max);
  sp::SpectrumComplex conv =
      c.shared_weights()
          ? sp::fourier_conv_shared(spec, pv.at(p + "spectral0.re"),
                                    pv.at(p + "spectral0.im"))
          : sp::fourier_conv_permode(spec, pv.at(p + "spectral0.re"),
                                     pv.at(p + "spectral0.im"));
  Var spatial = sp::dft_inverse(sp::mode_pad(conv));
  Var linear = ad::channel_linear(u, pv.at(p + "w.weight"),
                                  pv.at(p + "w.bias"));
  return ad::selu(ad::add(linear, spatial));
}

Var hno_block(const ModelConfig& c, Var u, const ParamVars& pv,
              const std::string& p) {
  sp::SpectrumReal spec = sp::mode_crop(sp::dht_forward(u), c.k_max);
  sp::SpectrumReal conv =
      c.spectral_nonlinearity
          ? sp::hartley_conv_shared_nonlinear(spec,
                                              pv.at(p + "spectral0.weight"))
          : sp::hartley_conv_shared(spec, pv.at(p + "spectral0.weight"));
  Var spatial = sp::dht_inverse(sp::mode_pad(conv));
  Var linear = ad::channel_linear(u, pv.at(p + "w.weight"),
                                  pv.at(p + "w.bias"));
  return ad::selu(ad::add(linear, spatial));
}

Var hno_xs_block(const ModelConfig& c, Var u, const ParamVars& pv,
                 const std::string& p) {
  sp::SpectrumReal spec = sp::mode_crop(sp::dht_forward(u), c.k_max);
  for (std::size_t j = 0; j < c.n_xs; ++j) {
    spec = sp::hartley_conv_shared_nonlinear(
        spec, pv.at(p + "spectral" + std::to_string(j) + ".weight"),
        /*residual=*/true);
  }
  return ad::selu(sp::dht_inverse(sp::mode_pad(spec)));
}

}  // namespace

ForwardResult Model::forward(ad::Tape& tape, const Tensor& input,
                             bool with_grad) const {
  return forward(tape, tape.constant(input), with_grad);
}

ForwardResult Model::forward(ad::Tape& tape, Var x, bool with_grad) const {
  config_.check_input_dims(x.shape());
  ParamVars pv;
  for (const auto& [name, t] : params_) {
    pv.vars.emplace(name, tape.leaf(t, with_grad));
  }
  Var u = ad::conv3d_k2s2(x, pv.at("input_conv.weight"),
                          pv.at("input_conv.bias"));

  std::vector<Var> stage_out(config_.n_blocks);
  for (std::size_t t = 0; t < config_.n_blocks; ++t) {
    const std::string p = "block" + std::to_string(t) + ".";
    if (pv.has(p + "unet.weight")) {
      // Decoder half: merge in the matching encoder stage output.
      Var skip = stage_out[config_.n_blocks - 1 - t];
      u = ad::channel_linear(ad::concat_channels(u, skip),
                             pv.at(p + "unet.weight"), pv.at(p + "unet.bias"));
    }
    Var v;
    switch (config_.variant) {
      case Variant::kFno:
      case Variant::kFnoSeg:
        v = fno_block(config_, u, pv, p);
        break;
      case Variant::kHnoSeg:
        v = hno_block(config_, u, pv, p);
        break;
      case Variant::kHnoSegXs:
        v = hno_xs_block(config_, u, pv, p);
        break;
    }
    if (config_.has_block_skips()) {
      u = ad::channel_linear(ad::concat_channels(u, v),
                             pv.at(p + "skip.weight"), pv.at(p + "skip.bias"));
    } else {
      u = v;
    }
    stage_out[t] = u;
  }

  const Shape& in_shape = x.shape();
  Var up = ad::trilinear_resample(u, {in_shape[1], in_shape[2], in_shape[3]});
  Var logits =
      ad::channel_linear(up, pv.at("output.weight"), pv.at("output.bias"));
  return ForwardResult{ad::sigmoid(logits), std::move(pv.vars)};
}

Tensor Model::predict(const Tensor& input) const {
  ad::Tape tape;
  return forward(tape, input, /*with_grad=*/false).output.value();
}

}  // namespace hnoseg::model
