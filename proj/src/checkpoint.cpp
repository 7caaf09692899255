#include "hnoseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "hnoseg/config.hpp"

namespace hnoseg::io {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, std::uint64_t offset,
                       const std::string& what) {
  throw std::runtime_error("checkpoint: " + path + ": " + what +
                           " at byte offset " + std::to_string(offset));
}

struct Reader {
  std::ifstream in;
  std::string path;
  std::uint64_t offset = 0;

  void read_raw(void* dst, std::size_t n, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
      fail(path, offset, std::string("truncated while reading ") + what);
    }
    offset += n;
  }

  template <typename T>
  T read_le(const char* what) {
    T v;
    read_raw(&v, sizeof(T), what);
    return v;  // little-endian host assumed (x86-64/aarch64)
  }
};

void write_raw(std::ofstream& out, const void* src, std::size_t n) {
  out.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ofstream& out, T v) {
  write_raw(out, &v, sizeof(T));
}

}  // namespace

void write_tensor_file(
    const std::string& path, const std::string& header_json,
    const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  write_raw(out, kMagic, 4);
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint64_t>(out, header_json.size());
  write_raw(out, header_json.data(), header_json.size());
  write_le<std::uint64_t>(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    write_raw(out, name.data(), name.size());
    write_le<std::uint8_t>(out, 1);  // f64
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) write_le<std::uint64_t>(out, d);
    write_raw(out, t.data(), t.size() * sizeof(double));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::pair<std::string, std::vector<std::pair<std::string, Tensor>>>
read_tensor_file(const std::string& path) {
  Reader r{std::ifstream(path, std::ios::binary), path, 0};
  if (!r.in) throw std::runtime_error("checkpoint: cannot open " + path);

  char magic[4];
  r.read_raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) fail(path, 0, "bad magic");
  const auto version = r.read_le<std::uint32_t>("version");
  if (version != kVersion) {
    fail(path, 4, "unsupported version " + std::to_string(version));
  }
  const auto header_len = r.read_le<std::uint64_t>("header length");
  std::string header(header_len, '\0');
  r.read_raw(header.data(), header_len, "header");
  const auto count = r.read_le<std::uint64_t>("tensor count");

  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.read_le<std::uint16_t>("name length");
    std::string name(name_len, '\0');
    r.read_raw(name.data(), name_len, "name");
    const std::uint64_t dtype_off = r.offset;
    const auto dtype = r.read_le<std::uint8_t>("dtype");
    if (dtype != 0 && dtype != 1) {
      fail(path, dtype_off, "unknown dtype " + std::to_string(dtype));
    }
    const auto rank = r.read_le<std::uint8_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.read_le<std::uint64_t>("dim"));
    }
    Tensor t(shape);
    if (dtype == 1) {
      r.read_raw(t.data(), t.size() * sizeof(double), "tensor data");
    } else {
      std::vector<float> buf(t.size());
      r.read_raw(buf.data(), t.size() * sizeof(float), "tensor data");
      for (std::size_t k = 0; k < t.size(); ++k) {
        t[k] = static_cast<double>(buf[k]);
      }
    }
    tensors.emplace_back(std::move(name), std::move(t));
  }
  return {std::move(header), std::move(tensors)};
}

void save_checkpoint(const model::Model& m, const CheckpointMeta& meta,
                     const std::string& path) {
  json header{{"model", config::model_config_to_json(m.config())},
              {"meta",
               {{"epochs_completed", meta.epochs_completed},
                {"final_lr", meta.final_lr},
                {"seed", meta.seed}}}};
  write_tensor_file(path, header.dump(), m.params());
}

namespace {
CheckpointMeta parse_meta(const json& header) {
  CheckpointMeta meta;
  if (header.contains("meta")) {
    const json& m = header.at("meta");
    meta.epochs_completed = m.value("epochs_completed", std::size_t{0});
    meta.final_lr = m.value("final_lr", 0.0);
    meta.seed = m.value("seed", std::uint64_t{0});
  }
  return meta;
}
}  // namespace

model::Model load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  auto [header_str, tensors] = read_tensor_file(path);
  json header = json::parse(header_str);
  model::ModelConfig cfg = config::model_config_from_json(header.at("model"));
  if (meta != nullptr) *meta = parse_meta(header);
  return model::Model::from_parts(cfg, std::move(tensors));
}

model::Model load_checkpoint_as(const std::string& path,
                                const model::ModelConfig& config,
                                CheckpointMeta* meta) {
  auto [header_str, tensors] = read_tensor_file(path);
  if (meta != nullptr) *meta = parse_meta(json::parse(header_str));
  return model::Model::from_parts(config, std::move(tensors));
}

}  // namespace hnoseg::io
