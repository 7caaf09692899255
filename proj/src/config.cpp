#include "hnoseg/config.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace hnoseg::config {

using nlohmann::json;

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (data.n_scenes < 2) {
    throw std::invalid_argument("config: data.n_scenes must be >= 2");
  }
  if (data.resolution % 2 != 0 || data.resolution == 0) {
    throw std::invalid_argument("config: data.resolution must be even");
  }
  if (data.spec.num_labels != model.num_labels) {
    throw std::invalid_argument(
        "config: data.num_labels must match model.num_labels");
  }
  if (data.spec.channels != model.in_channels) {
    throw std::invalid_argument(
        "config: data.channels must match model.in_channels");
  }
  // Training resolution must leave room for the retained band.
  Shape s = {model.in_channels, data.resolution, data.resolution,
             data.resolution};
  model.check_input_dims(s);
}

json model_config_to_json(const model::ModelConfig& c) {
  return json{{"variant", model::variant_name(c.variant)},
              {"d", c.d},
              {"n_blocks", c.n_blocks},
              {"n_xs", c.n_xs},
              {"k_max", {c.k_max[0], c.k_max[1], c.k_max[2]}},
              {"in_channels", c.in_channels},
              {"num_labels", c.num_labels},
              {"spectral_nonlinearity", c.spectral_nonlinearity}};
}

model::ModelConfig model_config_from_json(const json& j) {
  model::ModelConfig c;
  c.variant = model::variant_from_name(j.at("variant").get<std::string>());
  c.d = j.at("d").get<std::size_t>();
  c.n_blocks = j.at("n_blocks").get<std::size_t>();
  c.n_xs = j.value("n_xs", std::size_t{1});
  auto km = j.at("k_max");
  if (!km.is_array() || km.size() != 3) {
    throw std::invalid_argument("config: k_max must be an array of 3");
  }
  for (int a = 0; a < 3; ++a) c.k_max[a] = km[a].get<std::size_t>();
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.num_labels = j.at("num_labels").get<std::size_t>();
  c.spectral_nonlinearity = j.value("spectral_nonlinearity", true);
  c.validate();
  return c;
}

json run_config_to_json(const RunConfig& c) {
  return json{
      {"model", model_config_to_json(c.model)},
      {"train",
       {{"epochs", c.train.epochs},
        {"lr_max", c.train.lr_max},
        {"lr_min", c.train.lr_min},
        {"seed", c.train.seed},
        {"augment", c.train.augment},
        {"eval_resolutions", c.train.eval_resolutions}}},
      {"data",
       {{"n_scenes", c.data.n_scenes},
        {"resolution", c.data.resolution},
        {"min_objects", c.data.spec.min_objects},
        {"max_objects", c.data.spec.max_objects},
        {"min_radius", c.data.spec.min_radius},
        {"max_radius", c.data.spec.max_radius},
        {"edge_sigma", c.data.spec.edge_sigma}}}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) {
    const json& t = j.at("train");
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.lr_max = t.value("lr_max", c.train.lr_max);
    c.train.lr_min = t.value("lr_min", c.train.lr_min);
    c.train.seed = t.value("seed", c.train.seed);
    c.train.augment = t.value("augment", c.train.augment);
    c.train.eval_resolutions = t.value("eval_resolutions",
                                       c.train.eval_resolutions);
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    c.data.n_scenes = d.value("n_scenes", c.data.n_scenes);
    c.data.resolution = d.value("resolution", c.data.resolution);
    c.data.spec.min_objects = d.value("min_objects", c.data.spec.min_objects);
    c.data.spec.max_objects = d.value("max_objects", c.data.spec.max_objects);
    c.data.spec.min_radius = d.value("min_radius", c.data.spec.min_radius);
    c.data.spec.max_radius = d.value("max_radius", c.data.spec.max_radius);
    c.data.spec.edge_sigma = d.value("edge_sigma", c.data.spec.edge_sigma);
  }
  c.data.spec.num_labels = c.model.num_labels;
  c.data.spec.channels = c.model.in_channels;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config: " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace hnoseg::config
