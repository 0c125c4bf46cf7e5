#include "cdkit/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "cdkit/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");
static_assert(sizeof(double) == 8);

namespace cdkit::tensor {

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw IoError("checkpoint is missing tensor '" + name + "'");
  return it->second;
}

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", t->shape}, {"offset", offset}});
    offset += t->size() * sizeof(double);
  }
  std::string hs = header.dump();
  if (hs.size() > UINT32_MAX) throw IoError("checkpoint header too large");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write("CKT1", 4);
  uint32_t hlen = uint32_t(hs.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(hs.data(), std::streamsize(hs.size()));
  for (const auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t->values.data()),
              std::streamsize(t->size() * sizeof(double)));
  if (!out) throw IoError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("checkpoint not found: " + path);

  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "CKT1", 4) != 0)
    throw IoError("bad checkpoint magic in " + path);
  uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  if (in.gcount() != 4) throw IoError("truncated checkpoint header in " + path);
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  if (in.gcount() != std::streamsize(hlen)) throw IoError("truncated checkpoint header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint header in " + path + ": " + e.what());
  }

  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Checkpoint ckpt;
  try {
    ckpt.meta = header.at("meta");
    for (const auto& jt : header.at("tensors")) {
      CheckpointEntry e;
      e.shape = jt.at("shape").get<std::vector<int>>();
      uint64_t offset = jt.at("offset").get<uint64_t>();
      size_t count = numel(e.shape);
      if (offset + count * sizeof(double) > payload.size())
        throw IoError("checkpoint payload truncated in " + path);
      e.values.resize(count);
      std::memcpy(e.values.data(), payload.data() + offset, count * sizeof(double));
      ckpt.tensors.emplace(jt.at("name").get<std::string>(), std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint header in " + path + ": " + e.what());
  }
  return ckpt;
}

}  // namespace cdkit::tensor
