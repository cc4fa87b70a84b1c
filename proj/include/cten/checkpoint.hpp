#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cten/common.hpp"
#include "cten/config_json.hpp"
#include "cten/model.hpp"

// Parameter checkpoint: self-describing binary with a JSON metadata block
// (model structure, seed, epoch) followed by flat little-endian f64 arrays
// per named parameter.
//
//   magic "CTENCKP1" | u32 version | u64 meta_len | metadata JSON |
//   u32 n_tensors | { u32 name_len | name | u32 rank | u64 dims[] | f64[] }*

namespace cten {

inline constexpr char kCheckpointMagic[8] = {'C', 'T', 'E', 'N', 'C', 'K', 'P', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  CtenParams params;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
};

inline void save_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  auto put = [&out](const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  auto put_u32 = [&](std::uint32_t v) { put(&v, 4); };
  auto put_u64 = [&](std::uint64_t v) { put(&v, 8); };

  put(kCheckpointMagic, 8);
  put_u32(kCheckpointVersion);
  const std::string meta = json{{"schema", "cten-checkpoint/1"},
                                {"model", to_json(ckpt.params.spec)},
                                {"seed", ckpt.seed},
                                {"epoch", ckpt.epoch}}
                               .dump();
  put_u64(meta.size());
  put(meta.data(), meta.size());

  const auto named = ckpt.params.named_tensors();
  put_u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, tensor] : named) {
    put_u32(static_cast<std::uint32_t>(name.size()));
    put(name.data(), name.size());
    put_u32(static_cast<std::uint32_t>(tensor->rank()));
    for (std::size_t d : tensor->shape()) put_u64(d);
    put(tensor->data(), tensor->size() * sizeof(double));
  }
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot open '" + path + "' for writing");
  save_checkpoint(ckpt, out);
  if (!out) throw DomainError("write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(std::istream& in) {
  detail::ByteReader r(in);
  char magic[8];
  r.read(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw ParseError("bad magic bytes; not a checkpoint file", 0);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 8);
  const auto meta_len = r.get<std::uint64_t>();
  std::string meta(meta_len, '\0');
  r.read(meta.data(), meta_len);

  Checkpoint ckpt;
  ModelSpec spec;
  try {
    const json j = json::parse(meta);
    spec = model_from_json(j.at("model"));
    ckpt.seed = j.value("seed", std::uint64_t(0));
    ckpt.epoch = j.value("epoch", std::uint64_t(0));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad checkpoint metadata: ") + e.what(), 20);
  }
  ckpt.params = init_params(spec, 0);  // allocates the right tensor set

  auto named = ckpt.params.named_tensors();
  const auto n_tensors = r.get<std::uint32_t>();
  if (n_tensors != named.size())
    throw ParseError("checkpoint holds " + std::to_string(n_tensors) +
                         " tensors; model structure needs " +
                         std::to_string(named.size()),
                     r.offset());
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(name_len, '\0');
    r.read(name.data(), name_len);
    if (name != named[i].first)
      throw ParseError("tensor " + std::to_string(i) + " is '" + name +
                           "', expected '" + named[i].first + "'",
                       r.offset());
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    if (shape != named[i].second->shape())
      throw ParseError("tensor '" + name + "' has shape " + shape_str(shape) +
                           ", expected " + shape_str(named[i].second->shape()),
                       r.offset());
    r.read(named[i].second->data(), named[i].second->size() * sizeof(double));
  }
  return ckpt;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open '" + path + "' for reading");
  return load_checkpoint(in);
}

}  // namespace cten
