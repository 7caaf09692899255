// JSON (de)serialization for run configuration: model + train + data
// sections. Cross-field constraints are re-validated on parse.

#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "hnoseg/model.hpp"
#include "hnoseg/synthdata.hpp"
#include "hnoseg/trainer.hpp"

namespace hnoseg::config {

struct DataConfig {
  std::size_t n_scenes = 40;
  std::size_t resolution = 32;
  synth::SceneSpec spec;
};

struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  DataConfig data;

  void validate() const;
};

nlohmann::json model_config_to_json(const model::ModelConfig& c);
model::ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json run_config_to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::string& path);

}  // namespace hnoseg::config
