#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace hkq {

// Philox4x32-10 counter-based generator. A draw is addressed by
// (seed, stream, block index); there is no hidden state, so any (seed, stream)
// pair yields the same numbers regardless of scheduling or thread count.
namespace philox {

inline constexpr uint32_t kMultA = 0xD2511F53u;
inline constexpr uint32_t kMultB = 0xCD9E8D57u;
inline constexpr uint32_t kWeylA = 0x9E3779B9u;
inline constexpr uint32_t kWeylB = 0xBB67AE85u;

struct Block {
  uint32_t w[4];
};

inline void bump_key(uint32_t& k0, uint32_t& k1) {
  k0 += kWeylA;
  k1 += kWeylB;
}

inline void one_round(uint32_t c[4], uint32_t k0, uint32_t k1) {
  const uint64_t p0 = static_cast<uint64_t>(kMultA) * c[0];
  const uint64_t p1 = static_cast<uint64_t>(kMultB) * c[2];
  const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
  const uint32_t lo0 = static_cast<uint32_t>(p0);
  const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
  const uint32_t lo1 = static_cast<uint32_t>(p1);
  const uint32_t out0 = hi1 ^ c[1] ^ k0;
  const uint32_t out2 = hi0 ^ c[3] ^ k1;
  c[0] = out0;
  c[1] = lo1;
  c[2] = out2;
  c[3] = lo0;
}

/// 10-round Philox block: counter = (index, stream), key = seed.
inline Block generate(uint64_t seed, uint64_t stream, uint64_t index) {
  uint32_t c[4] = {static_cast<uint32_t>(index), static_cast<uint32_t>(index >> 32),
                   static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32)};
  uint32_t k0 = static_cast<uint32_t>(seed);
  uint32_t k1 = static_cast<uint32_t>(seed >> 32);
  for (int r = 0; r < 10; ++r) {
    one_round(c, k0, k1);
    if (r < 9) bump_key(k0, k1);
  }
  return Block{{c[0], c[1], c[2], c[3]}};
}

}  // namespace philox

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Master-seed fan-out: each pipeline stage draws from its own seed
/// stage_seed = splitmix64(master ^ fnv1a64(stage name)); items within a
/// stage (paths, base points) use their index as the Philox stream id.
inline uint64_t stage_seed(uint64_t master, std::string_view stage) {
  return splitmix64(master ^ fnv1a64(stage));
}

/// Sequential N(0,1) draws for one (seed, stream) pair.
/// Box-Muller over Philox uniforms; one block yields two normals.
class NormalStream {
 public:
  NormalStream(uint64_t seed, uint64_t stream)
      : seed_(seed), stream_(stream) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const philox::Block b = philox::generate(seed_, stream_, index_++);
    const uint64_t u0 = (static_cast<uint64_t>(b.w[0]) << 32) | b.w[1];
    const uint64_t u1 = (static_cast<uint64_t>(b.w[2]) << 32) | b.w[3];
    // u in (0,1]: guarantees log() is finite
    const double a = (static_cast<double>(u0 >> 11) + 1.0) * 0x1.0p-53;
    const double phi = 2.0 * M_PI * (static_cast<double>(u1 >> 11) * 0x1.0p-53);
    const double r = std::sqrt(-2.0 * std::log(a));
    spare_ = r * std::sin(phi);
    have_spare_ = true;
    return r * std::cos(phi);
  }

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }

 private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t index_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace hkq
