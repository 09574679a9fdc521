#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "mcqa/adam.hpp"
#include "mcqa/error.hpp"
#include "mcqa/feature_file.hpp"
#include "mcqa/model.hpp"
#include "mcqa/param_store.hpp"

namespace mcqa {

// Versioned little-endian checkpoint: model configuration, the RNG seed and
// epoch counter needed to resume the training schedule, and every named
// parameter tensor as a raw 64-bit payload (optionally with Adam moments).
// Round-trips are bit-exact, including signed zeros and subnormals.

struct Checkpoint {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::uint32_t epochs_completed = 0;
  bool has_optimizer = false;
  AdamState adam;
  ParameterStore store;
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'M', 'C', 'Q', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct ByteWriter {
  std::string bytes;
  void u8(std::uint8_t v) { bytes.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes += s;
  }
  void tensor_payload(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) f64(t[i]);
  }
};

struct ByteReader {
  const std::string& bytes;
  std::size_t pos = 0;
  std::string origin;

  void need(std::size_t n, const char* what) {
    if (pos + n > bytes.size())
      fail("load_checkpoint: '", origin, "' truncated while reading ", what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes[pos++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
  void tensor_payload(Tensor& t, const char* what) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = f64(what);
  }
};

inline void write_config(ByteWriter& w, const ModelConfig& c) {
  const std::size_t fields[] = {c.d_text, c.d_audio, c.d_video, c.h_text,
                                c.h_audio, c.h_video, c.h_query, c.h_fusion,
                                c.h_final, c.d_att,   c.d_ffn,  c.seq_len};
  for (std::size_t f : fields) w.u32(static_cast<std::uint32_t>(f));
  w.u8(c.ablate_fusion_coattention ? 1 : 0);
  w.u8(c.ablate_context_query_coattention ? 1 : 0);
  w.u8(c.mask_padding ? 1 : 0);
}

inline ModelConfig read_config(ByteReader& r) {
  ModelConfig c;
  std::size_t* fields[] = {&c.d_text, &c.d_audio, &c.d_video, &c.h_text,
                           &c.h_audio, &c.h_video, &c.h_query, &c.h_fusion,
                           &c.h_final, &c.d_att,   &c.d_ffn,  &c.seq_len};
  for (std::size_t* f : fields) *f = r.u32("config");
  c.ablate_fusion_coattention = r.u8("config") != 0;
  c.ablate_context_query_coattention = r.u8("config") != 0;
  c.mask_padding = r.u8("config") != 0;
  return c;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.bytes.append(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  w.u32(detail::kCheckpointVersion);
  detail::write_config(w, ckpt.config);
  w.u64(ckpt.seed);
  w.u32(ckpt.epochs_completed);
  w.u8(ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    w.f64(ckpt.adam.lr);
    w.f64(ckpt.adam.beta1);
    w.f64(ckpt.adam.beta2);
    w.f64(ckpt.adam.eps);
    w.u64(ckpt.adam.step);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.store.size()));
  for (std::size_t p = 0; p < ckpt.store.size(); ++p) {
    const Tensor& t = ckpt.store.value(p);
    w.str(ckpt.store.name(p));
    w.u8(static_cast<std::uint8_t>(t.rank()));
    w.u32(static_cast<std::uint32_t>(t.rows()));
    if (t.rank() == 2) w.u32(static_cast<std::uint32_t>(t.cols()));
    w.tensor_payload(t);
    if (ckpt.has_optimizer) {
      w.tensor_payload(ckpt.store.adam_m(p));
      w.tensor_payload(ckpt.store.adam_v(p));
    }
  }
  return w.bytes;
}

inline void save_checkpoint(const Checkpoint& ckpt,
                            const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_checkpoint(ckpt), "save_checkpoint");
}

inline Checkpoint decode_checkpoint(const std::string& bytes,
                                    const std::string& origin) {
  detail::ByteReader r{bytes, 0, origin};
  r.need(sizeof(detail::kCheckpointMagic), "magic");
  if (std::memcmp(bytes.data(), detail::kCheckpointMagic,
                  sizeof(detail::kCheckpointMagic)) != 0)
    fail("load_checkpoint: '", origin, "' is not a checkpoint file");
  r.pos = sizeof(detail::kCheckpointMagic);
  const std::uint32_t version = r.u32("version");
  if (version != detail::kCheckpointVersion)
    fail("load_checkpoint: '", origin, "' has unknown version ", version);

  Checkpoint ckpt;
  ckpt.config = detail::read_config(r);
  ckpt.seed = r.u64("seed");
  ckpt.epochs_completed = r.u32("epoch counter");
  ckpt.has_optimizer = r.u8("optimizer flag") != 0;
  if (ckpt.has_optimizer) {
    ckpt.adam.lr = r.f64("optimizer state");
    ckpt.adam.beta1 = r.f64("optimizer state");
    ckpt.adam.beta2 = r.f64("optimizer state");
    ckpt.adam.eps = r.f64("optimizer state");
    ckpt.adam.step = r.u64("optimizer state");
  }
  const std::uint32_t n_tensors = r.u32("tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.str("tensor name");
    const std::uint8_t rank = r.u8("tensor rank");
    if (rank != 1 && rank != 2)
      fail("load_checkpoint: '", origin, "' tensor '", name, "' has rank ",
           static_cast<int>(rank));
    const std::uint32_t rows = r.u32("tensor shape");
    const std::uint32_t cols = rank == 2 ? r.u32("tensor shape") : 1;
    if (rows == 0 || cols == 0)
      fail("load_checkpoint: '", origin, "' tensor '", name, "' has zero extent");
    Tensor t = rank == 1 ? Tensor::vector(rows) : Tensor::matrix(rows, cols);
    r.tensor_payload(t, "tensor payload");
    const std::size_t idx = ckpt.store.add(name, std::move(t));
    if (ckpt.has_optimizer) {
      r.tensor_payload(ckpt.store.adam_m(idx), "optimizer payload");
      r.tensor_payload(ckpt.store.adam_v(idx), "optimizer payload");
    }
  }
  if (r.pos != bytes.size())
    fail("load_checkpoint: '", origin, "' has ", bytes.size() - r.pos,
         " trailing bytes");
  return ckpt;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path, "load_checkpoint"),
                           path.string());
}

// Copies checkpoint parameters (and optimizer slots) into a live store built
// from a config. The name sets must coincide and shapes must match; the first
// mismatched tensor is named.
inline void apply_checkpoint_to(const Checkpoint& ckpt, ParameterStore& live) {
  if (ckpt.store.size() != live.size())
    fail("apply_checkpoint: checkpoint has ", ckpt.store.size(),
         " tensors, expected ", live.size());
  for (std::size_t p = 0; p < live.size(); ++p) {
    const std::string& name = live.name(p);
    if (!ckpt.store.contains(name))
      fail("apply_checkpoint: missing tensor '", name, "'");
    const std::size_t src = ckpt.store.index_of(name);
    const Tensor& t = ckpt.store.value(src);
    if (!t.same_shape(live.value(p)))
      fail("apply_checkpoint: tensor '", name, "' has shape ", t.shape_str(),
           ", expected ", live.value(p).shape_str());
    live.value(p) = t;
    if (ckpt.has_optimizer) {
      live.adam_m(p) = ckpt.store.adam_m(src);
      live.adam_v(p) = ckpt.store.adam_v(src);
    }
  }
}

// Snapshot of a live store for writing.
inline Checkpoint make_checkpoint(const ModelConfig& config, std::uint64_t seed,
                                  std::uint32_t epochs_completed,
                                  const ParameterStore& store,
                                  const AdamState* adam = nullptr) {
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.seed = seed;
  ckpt.epochs_completed = epochs_completed;
  if (adam != nullptr) {
    ckpt.has_optimizer = true;
    ckpt.adam = *adam;
  }
  for (std::size_t p = 0; p < store.size(); ++p) {
    const std::size_t idx = ckpt.store.add(store.name(p), store.value(p));
    if (adam != nullptr) {
      ckpt.store.adam_m(idx) = store.adam_m(p);
      ckpt.store.adam_v(idx) = store.adam_v(p);
    }
  }
  return ckpt;
}

}  // namespace mcqa
