#pragma once

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cttvae/data_model.hpp"
#include "cttvae/vae.hpp"

namespace cttvae {

inline constexpr std::string_view kCheckpointMagic = "CTTVAE-CKPT-v1";

// Layout: magic, '\n', u64 header length (little endian), JSON header,
// then every tensor as row-major little-endian float64 in header order.
struct Checkpoint {
  TransformerVae<double> model;
  TableSchema schema;
  std::uint64_t seed = 0;
  nlohmann::json run_config;  // snapshot, may be null
};

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  const auto& model = ck.model;
  nlohmann::json header;
  header["format"] = std::string(kCheckpointMagic);
  header["model_config"] = to_json(model.config());
  header["schema"] = to_json(ck.schema);
  header["schema_hash"] = hex64(schema_hash(ck.schema));
  header["seed"] = ck.seed;
  header["run_config"] = ck.run_config;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (const auto& p : model.params().all())
    tensors.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  const std::string hdr = header.dump();

  std::string out(kCheckpointMagic);
  out.push_back('\n');
  std::uint64_t len = hdr.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += hdr;
  for (const auto& p : model.params().all()) {
    const auto bytes = static_cast<std::size_t>(p.value.size()) * sizeof(double);
    const auto off = out.size();
    out.resize(off + bytes);
    std::memcpy(out.data() + off, p.value.data(), bytes);
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  const std::size_t magic_len = kCheckpointMagic.size() + 1;
  if (bytes.size() < magic_len + 8 || bytes.compare(0, kCheckpointMagic.size(), kCheckpointMagic) != 0 ||
      bytes[kCheckpointMagic.size()] != '\n')
    throw Error("checkpoint: bad magic (expected " + std::string(kCheckpointMagic) + ")");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i)
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[magic_len + i])) << (8 * i);
  std::size_t pos = magic_len + 8;
  if (bytes.size() < pos + len) throw Error("checkpoint: truncated header");
  auto header = nlohmann::json::parse(bytes.substr(pos, len));
  pos += len;

  Checkpoint ck;
  ck.schema = schema_from_json(header.at("schema"));
  if (header.at("schema_hash").get<std::string>() != hex64(schema_hash(ck.schema)))
    throw Error("checkpoint: schema hash mismatch");
  ck.seed = header.at("seed").get<std::uint64_t>();
  ck.run_config = header.value("run_config", nlohmann::json());
  ck.model = TransformerVae<double>(model_config_from_json(header.at("model_config")), encoded_layout(ck.schema), 0);
  auto& params = ck.model.params().all();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) throw Error("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (tensors[i].at("name").get<std::string>() != p.name || tensors[i].at("rows").get<Eigen::Index>() != p.value.rows() ||
        tensors[i].at("cols").get<Eigen::Index>() != p.value.cols())
      throw Error("checkpoint: tensor " + p.name + " does not match the model layout");
    const auto n = static_cast<std::size_t>(p.value.size()) * sizeof(double);
    if (bytes.size() < pos + n) throw Error("checkpoint: truncated tensor data");
    std::memcpy(p.value.data(), bytes.data() + pos, n);
    pos += n;
  }
  if (pos != bytes.size()) throw Error("checkpoint: trailing bytes");
  return ck;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::uint64_t save_checkpoint(const std::string& path, const Checkpoint& ck) {
  auto bytes = serialize_checkpoint(ck);
  write_file(path, bytes);
  return fnv1a64(bytes);
}

inline Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace cttvae
