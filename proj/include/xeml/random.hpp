#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace xeml {

using Rng = std::mt19937_64;

/// Salts separating the independent streams derived from one master seed.
enum class StreamSalt : std::uint64_t {
  init = 0x1001,
  train_episode = 0x2002,
  eval_episode = 0x3003,
  synth_style = 0x4004,
  synth_instance = 0x5005,
  validation = 0x6006,
};

/// Deterministic stream `index` of `master`. Streams with different
/// (salt, index) pairs are statistically independent.
inline Rng make_stream(std::uint64_t master, StreamSalt salt, std::uint64_t index = 0) {
  const auto s = static_cast<std::uint64_t>(salt);
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

/// `k` distinct indices from [0, n), in draw order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace xeml
