#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ulab/core/error.hpp"
#include "ulab/nn/checkpoint.hpp"
#include "ulab/nn/model_spec.hpp"

namespace ulab::nn {

// "ULCK1" checkpoint container: magic, format version, spec hash, layer
// table (name, kind, output shape), then little-endian float32 parameters
// followed by BN running statistics. Round-trips are bit-exact.
namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  std::uint8_t u8() {
    ULAB_CHECK(pos < buf.size(), "checkpoint file truncated at offset " + std::to_string(pos));
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s;
    s.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) s.push_back(static_cast<char>(u8()));
    return s;
  }
};

}  // namespace detail

inline constexpr char kCheckpointMagic[5] = {'U', 'L', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string encode_checkpoint(const ModelSpec& spec, const Checkpoint<float>& ckpt) {
  ULAB_CHECK(ckpt.spec_hash == spec.hash(), "checkpoint does not belong to this spec");
  std::string out;
  out.append(kCheckpointMagic, 5);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, ckpt.spec_hash);
  detail::put_u64(out, ckpt.step_count);
  const auto shapes = spec.activation_shapes();
  detail::put_u32(out, static_cast<std::uint32_t>(spec.layers.size()));
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    detail::put_u32(out, static_cast<std::uint32_t>(l.name.size()));
    out.append(l.name);
    const std::string kind = layer_kind_name(l.kind);
    detail::put_u32(out, static_cast<std::uint32_t>(kind.size()));
    out.append(kind);
    detail::put_u32(out, static_cast<std::uint32_t>(shapes[i + 1].size()));
    for (auto d : shapes[i + 1]) detail::put_u64(out, d);
  }
  detail::put_u64(out, ckpt.params.size());
  for (float v : ckpt.params) detail::put_f32(out, v);
  detail::put_u64(out, ckpt.bn_stats.size());
  for (float v : ckpt.bn_stats) detail::put_f32(out, v);
  return out;
}

inline Checkpoint<float> decode_checkpoint(const std::string& buf, const ModelSpec& spec) {
  detail::Reader r{buf};
  for (char expect : kCheckpointMagic) {
    const std::size_t at = r.pos;
    if (static_cast<char>(r.u8()) != expect)
      throw Error("bad checkpoint magic at offset " + std::to_string(at));
  }
  const std::uint32_t version = r.u32();
  ULAB_CHECK(version == kCheckpointVersion,
             "unsupported checkpoint version " + std::to_string(version));
  Checkpoint<float> ckpt;
  ckpt.spec_hash = r.u64();
  ULAB_CHECK(ckpt.spec_hash == spec.hash(), "checkpoint spec hash does not match the model spec");
  ckpt.step_count = r.u64();
  const std::uint32_t layer_count = r.u32();
  ULAB_CHECK(layer_count == spec.layers.size(), "checkpoint layer table size mismatch");
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const std::string name = r.str();
    const std::string kind = r.str();
    ULAB_CHECK(name == spec.layers[i].name && kind == layer_kind_name(spec.layers[i].kind),
               "checkpoint layer table entry mismatch at layer " + std::to_string(i));
    const std::uint32_t ndim = r.u32();
    for (std::uint32_t d = 0; d < ndim; ++d) r.u64();
  }
  Layout layout(spec);
  const std::uint64_t n_params = r.u64();
  ULAB_CHECK(n_params == layout.param_count, "checkpoint parameter count mismatch");
  ckpt.params.resize(n_params);
  for (auto& v : ckpt.params) v = r.f32();
  const std::uint64_t n_stats = r.u64();
  ULAB_CHECK(n_stats == layout.bn_stat_count, "checkpoint BN stat count mismatch");
  ckpt.bn_stats.resize(n_stats);
  for (auto& v : ckpt.bn_stats) v = r.f32();
  ULAB_CHECK(r.pos == buf.size(), "trailing bytes after checkpoint payload");
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const ModelSpec& spec,
                            const Checkpoint<float>& ckpt) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  ULAB_CHECK(f.good(), "cannot open checkpoint file for writing: " + path);
  const std::string buf = encode_checkpoint(spec, ckpt);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  ULAB_CHECK(f.good(), "checkpoint write failed: " + path);
}

inline Checkpoint<float> load_checkpoint(const std::string& path, const ModelSpec& spec) {
  std::ifstream f(path, std::ios::binary);
  ULAB_CHECK(f.good(), "cannot open checkpoint file: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(buf, spec);
}

}  // namespace ulab::nn
