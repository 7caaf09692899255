// Binary tensor container and model checkpoints.
//
// Layout, little-endian:
//   magic "HNOX" (4 bytes) | version u32 | header-length u64 | header JSON
//   | tensor count u64 | per tensor:
//       name-length u16 | name UTF-8 | dtype u8 (0=f32, 1=f64) | rank u8
//       | dims u64 x rank | raw values
// Malformed files are rejected with the byte offset of the fault.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hnoseg/model.hpp"

namespace hnoseg::io {

inline constexpr char kMagic[4] = {'H', 'N', 'O', 'X'};
inline constexpr std::uint32_t kVersion = 1;

struct CheckpointMeta {
  std::size_t epochs_completed = 0;
  double final_lr = 0.0;
  std::uint64_t seed = 0;
};

// Generic container (also used for dataset samples).
void write_tensor_file(const std::string& path, const std::string& header_json,
                       const std::vector<std::pair<std::string, Tensor>>& tensors);
std::pair<std::string, std::vector<std::pair<std::string, Tensor>>>
read_tensor_file(const std::string& path);

void save_checkpoint(const model::Model& m, const CheckpointMeta& meta,
                     const std::string& path);

// Reads the checkpoint with its embedded config.
model::Model load_checkpoint(const std::string& path,
                             CheckpointMeta* meta = nullptr);

// Loads into an explicitly requested config; rejected if the stored tensor
// name set does not match what the config declares.
model::Model load_checkpoint_as(const std::string& path,
                                const model::ModelConfig& config,
                                CheckpointMeta* meta = nullptr);

}  // namespace hnoseg::io
