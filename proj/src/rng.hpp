#pragma once

#include <cstdint>
#include <random>

namespace pxd {

// Independent random streams derived from one master seed. Every consumer
// re-derives its engine from (stream, step), so resuming at any step or
// disabling one source leaves the other streams untouched.
enum class Stream : std::uint64_t { init = 1, gumbel = 2, augment = 3, timestep = 4, epsilon = 5 };

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct RngStreams {
  std::uint64_t master = 0;

  std::uint64_t seed(Stream s, std::uint64_t step) const noexcept {
    return splitmix64(splitmix64(splitmix64(master) ^ static_cast<std::uint64_t>(s)) ^ step);
  }
  std::mt19937_64 engine(Stream s, std::uint64_t step) const { return std::mt19937_64(seed(s, step)); }
};

}  // namespace pxd
