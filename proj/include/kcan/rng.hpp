#pragma once
// Deterministic RNG streams. Every sampling site derives its own stream from
// (seed, tags...) so results do not depend on evaluation order or thread count.

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace kcan {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix(uint64_t a, uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

using Rng = std::mt19937_64;

// Stream ids for the fixed sampling sites. Values are part of the determinism
// contract: changing them changes every seeded result.
enum class StreamTag : uint64_t {
  kInit = 1,
  kSplit = 2,
  kShuffleKg = 3,
  kShuffleTarget = 4,
  kCorruptTail = 5,
  kNegativeItem = 6,
  kSubgraphPos = 7,
  kSubgraphNeg = 8,
  kDropoutGlobal = 9,
  kDropoutPos = 10,
  kDropoutNeg = 11,
  kEvalUser = 12,
  kExplain = 13,
  kGradProbe = 14,
  kScore = 15,
  kSynth = 16,
};

inline uint64_t stream_seed(uint64_t seed, StreamTag tag, uint64_t a = 0, uint64_t b = 0,
                            uint64_t c = 0) {
  uint64_t s = mix(seed, static_cast<uint64_t>(tag));
  s = mix(s, a);
  s = mix(s, b);
  return mix(s, c);
}

inline Rng make_stream(uint64_t seed, StreamTag tag, uint64_t a = 0, uint64_t b = 0,
                       uint64_t c = 0) {
  return Rng(stream_seed(seed, tag, a, b, c));
}

inline double uniform01(Rng& rng) {
  // 53-bit mantissa draw in [0, 1)
  return (rng() >> 11) * 0x1.0p-53;
}

// Draw an index from a categorical distribution given its inclusive CDF.
// cdf.back() may be slightly off 1 from rounding; the last bucket absorbs it.
inline size_t draw_categorical(std::span<const double> cdf, Rng& rng) {
  const double u = uniform01(rng) * cdf.back();
  size_t lo = 0, hi = cdf.size() - 1;
  while (lo < hi) {
    const size_t mid = (lo + hi) / 2;
    if (cdf[mid] > u) hi = mid;
    else lo = mid + 1;
  }
  return lo;
}

// FNV-1a, used for config/id-map fingerprints embedded in outputs.
inline uint64_t fnv1a(std::span<const char> bytes, uint64_t h = 0xcbf29ce484222325ULL) {
  for (char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(std::span<const char>(s.data(), s.size()), h);
}

}  // namespace kcan
