#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace fedccea {

// SplitMix64 output function. Also used to derive child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derive an independent seed from a parent seed and a tag.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return mix64(mix64(seed + 0x9e3779b97f4a7c15ULL) ^ mix64(tag * 0xd1b54a32d192ed03ULL + 1));
}

// FNV-1a over a string, for tagging child streams by name.
constexpr std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based generator: draw k is mix64(seed + k * gamma). Every
// derived quantity (uniforms, normals, integers) is computed here rather
// than through <random> distributions, so identical seeds give identical
// sequences on every platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(seed_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform on the open interval (0, 1); zero is rejected.
  double uniform_open() noexcept {
    double u = uniform();
    while (u == 0.0) u = uniform();
    return u;
  }

  // Unbiased integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % bound;
    std::uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return r % bound;
  }

  // Standard normal via Box-Muller; one draw pair per call.
  double normal() noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  RngStream child(std::uint64_t tag) const noexcept { return RngStream(derive_seed(seed_, tag)); }
  RngStream child(std::string_view tag) const noexcept { return child(hash_tag(tag)); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace fedccea
