#pragma once

#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace mccl {

using Rng = std::mt19937_64;

// Independent, reproducible stream keyed by (seed, k1, k2, ...). Sampling code
// derives one stream per (epoch, anchor id) so results do not depend on the
// order anchors are visited in.
inline Rng stream_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * keys.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto k : keys) push(k);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Uniform index in [0, n). n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(rng);
}

// Fixed-reduction-order switch, read from PIPELINE_TEST_MODE=1.
inline bool test_mode() {
  const char* v = std::getenv("PIPELINE_TEST_MODE");
  return v != nullptr && std::string_view(v) == "1";
}

}  // namespace mccl
