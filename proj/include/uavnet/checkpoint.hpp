#pragma once

// Binary checkpoints. All integers are 64-bit little-endian (the version is
// 32-bit); doubles are stored as their IEEE-754 bit patterns, so a round
// trip is bit-exact. A trailing FNV-1a checksum covers everything before it.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "uavnet/config.hpp"
#include "uavnet/error.hpp"
#include "uavnet/meta.hpp"
#include "uavnet/nn.hpp"

namespace uavnet {

inline constexpr char kCheckpointMagic[8] = {'U', 'A', 'V', 'N', 'E', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  std::uint64_t fingerprint = 0;
  Algorithm algorithm = Algorithm::kA3c;
  std::uint64_t seed = 0;
  Policy policy;
  RmsPropState actor_opt;
  RmsPropState critic_opt;
  std::uint64_t updates = 0;
  std::uint64_t env_steps = 0;
  std::uint64_t meta_iterations = 0;
  std::string metadata;
  std::optional<MetaConfig> meta;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    auto same_meta = [](const std::optional<MetaConfig>& x, const std::optional<MetaConfig>& y) {
      if (x.has_value() != y.has_value()) return false;
      if (!x) return true;
      return x->inner_lr == y->inner_lr && x->meta_lr == y->meta_lr &&
             x->inner_steps == y->inner_steps && x->meta_batch == y->meta_batch &&
             x->iterations == y->iterations && x->first_order == y->first_order &&
             x->episodes_per_step == y->episodes_per_step && x->eval_episodes == y->eval_episodes &&
             x->weight_clip_lo == y->weight_clip_lo && x->weight_clip_hi == y->weight_clip_hi &&
             x->hvp_epsilon == y->hvp_epsilon && x->num_workers == y->num_workers &&
             x->sampled_eval == y->sampled_eval;
    };
    return a.format_version == b.format_version && a.fingerprint == b.fingerprint &&
           a.algorithm == b.algorithm && a.seed == b.seed && a.policy == b.policy &&
           a.actor_opt == b.actor_opt && a.critic_opt == b.critic_opt && a.updates == b.updates &&
           a.env_steps == b.env_steps && a.meta_iterations == b.meta_iterations &&
           a.metadata == b.metadata && same_meta(a.meta, b.meta);
  }
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes.append(s);
  }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  std::string bytes;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& b, std::size_t end) : bytes_(b), end_(end) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
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
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count() {
    std::uint64_t n = u64();
    require(n <= end_ - pos_, "corrupt checkpoint: length field out of range");
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    std::size_t n = count();
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> f64s() {
    std::size_t n = count();
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) {
    require(pos_ + n <= end_, "corrupt checkpoint: truncated payload");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline void write_params(ByteWriter& w, const ParamSet& p) {
  w.u8(static_cast<std::uint8_t>(p.role));
  w.u64(p.version);
  w.u64(p.shape.layers.size());
  for (const LayerShape& l : p.shape.layers) {
    w.u64(l.in);
    w.u64(l.out);
  }
  w.u64(p.shape.free);
  w.f64s(p.values);
}

inline ParamSet read_params(ByteReader& r) {
  ParamSet p;
  std::uint8_t role = r.u8();
  require(role <= 1, "corrupt checkpoint: bad parameter role");
  p.role = static_cast<ParamRole>(role);
  p.version = r.u64();
  std::size_t layers = r.count();
  for (std::size_t i = 0; i < layers; ++i) {
    LayerShape l;
    l.in = r.u64();
    l.out = r.u64();
    p.shape.layers.push_back(l);
  }
  p.shape.free = r.u64();
  p.values = r.f64s();
  require(p.shape.chains() && p.values.size() == p.shape.size(),
          "corrupt checkpoint: parameter shape does not match payload");
  return p;
}

inline void write_rms(ByteWriter& w, const RmsPropState& s) {
  w.f64(s.decay);
  w.f64(s.learning_rate);
  w.f64(s.stability);
  w.f64s(s.mean_square);
}

inline RmsPropState read_rms(ByteReader& r) {
  RmsPropState s;
  s.decay = r.f64();
  s.learning_rate = r.f64();
  s.stability = r.f64();
  s.mean_square = r.f64s();
  return s;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
  detail::ByteWriter w;
  w.bytes.append(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(c.format_version);
  w.u64(c.fingerprint);
  w.u8(static_cast<std::uint8_t>(c.algorithm));
  w.u64(c.seed);
  w.u64(c.updates);
  w.u64(c.env_steps);
  w.u64(c.meta_iterations);
  w.str(c.metadata);
  detail::write_params(w, c.policy.actor);
  detail::write_params(w, c.policy.critic);
  detail::write_rms(w, c.actor_opt);
  detail::write_rms(w, c.critic_opt);
  w.u8(c.meta ? 1 : 0);
  if (c.meta) {
    const MetaConfig& m = *c.meta;
    w.f64(m.inner_lr);
    w.f64(m.meta_lr);
    w.u64(m.inner_steps);
    w.u64(m.meta_batch);
    w.u64(m.iterations);
    w.u8(m.first_order ? 1 : 0);
    w.u64(m.episodes_per_step);
    w.u64(m.eval_episodes);
    w.f64(m.weight_clip_lo);
    w.f64(m.weight_clip_hi);
    w.f64(m.hvp_epsilon);
    w.u64(m.num_workers);
    w.u8(m.sampled_eval ? 1 : 0);
  }
  w.u64(fnv1a64(w.bytes));
  return w.bytes;
}

/// Parses a checkpoint; when `expected_fingerprint` is given it must match.
inline Checkpoint deserialize_checkpoint(const std::string& bytes,
                                         std::optional<std::uint64_t> expected_fingerprint = {}) {
  constexpr std::size_t kHeader = sizeof kCheckpointMagic + 4;
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw Error("unsupported checkpoint version (bad header)");
  detail::ByteReader head(bytes, kHeader);
  for (std::size_t i = 0; i < sizeof kCheckpointMagic; ++i) head.u8();
  std::uint32_t version = head.u32();
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  require(bytes.size() >= kHeader + 8, "corrupt checkpoint: truncated payload");

  const std::size_t body_end = bytes.size() - 8;
  detail::ByteReader tail(bytes, bytes.size());
  for (std::size_t i = 0; i < body_end; ++i) tail.u8();
  require(tail.u64() == fnv1a64(bytes.substr(0, body_end)), "corrupt checkpoint: checksum mismatch");

  detail::ByteReader r(bytes, body_end);
  for (std::size_t i = 0; i < kHeader; ++i) r.u8();
  Checkpoint c;
  c.format_version = version;
  c.fingerprint = r.u64();
  std::uint8_t algo = r.u8();
  require(algo <= 1, "corrupt checkpoint: bad algorithm tag");
  c.algorithm = static_cast<Algorithm>(algo);
  c.seed = r.u64();
  c.updates = r.u64();
  c.env_steps = r.u64();
  c.meta_iterations = r.u64();
  c.metadata = r.str();
  c.policy.actor = detail::read_params(r);
  c.policy.critic = detail::read_params(r);
  c.actor_opt = detail::read_rms(r);
  c.critic_opt = detail::read_rms(r);
  require(c.actor_opt.mean_square.size() == c.policy.actor.values.size() &&
              c.critic_opt.mean_square.size() == c.policy.critic.values.size(),
          "corrupt checkpoint: optimizer state shape mismatch");
  if (r.u8() != 0) {
    MetaConfig m;
    m.inner_lr = r.f64();
    m.meta_lr = r.f64();
    m.inner_steps = r.u64();
    m.meta_batch = r.u64();
    m.iterations = r.u64();
    m.first_order = r.u8() != 0;
    m.episodes_per_step = r.u64();
    m.eval_episodes = r.u64();
    m.weight_clip_lo = r.f64();
    m.weight_clip_hi = r.f64();
    m.hvp_epsilon = r.f64();
    m.num_workers = r.u64();
    m.sampled_eval = r.u8() != 0;
    c.meta = m;
  }
  require(r.pos() == body_end, "corrupt checkpoint: trailing bytes");
  if (expected_fingerprint && *expected_fingerprint != c.fingerprint)
    throw Error("checkpoint scenario fingerprint mismatch: the checkpoint was trained on a different scenario");
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open checkpoint for writing: " + path);
  std::string bytes = serialize_checkpoint(c);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), "failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path,
                                  std::optional<std::uint64_t> expected_fingerprint = {}) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, expected_fingerprint);
}

}  // namespace uavnet
