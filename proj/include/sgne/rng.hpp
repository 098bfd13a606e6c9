#pragma once

#include <cstdint>
#include <random>

namespace sgne {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// What a substream is used for. Distinct purposes never share draws.
enum class StreamPurpose : std::uint64_t {
  iterate = 1,
  residual = 2,
  verification = 3,
  lipschitz = 4,
  diagnostics = 5,
  probes = 6,
  lift_check = 7,
};

/// Seeds a substream from (seed, purpose, iteration, entity). Entity 0 is the
/// coordinator, players are 1..N.
constexpr std::uint64_t substream_seed(std::uint64_t seed, StreamPurpose purpose, std::uint64_t k,
                                       std::uint64_t entity) noexcept {
  std::uint64_t h = mix64(seed ^ (static_cast<std::uint64_t>(purpose) * 0xd6e8feb86659fd93ULL));
  h = mix64(h ^ k);
  return mix64(h ^ (entity + 0x632be59bd9b4e019ULL));
}

/// Random stream owned by a single unit of work.
class RngStream {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  static RngStream keyed(std::uint64_t seed, StreamPurpose purpose, std::uint64_t k,
                         std::uint64_t entity) {
    return RngStream(substream_seed(seed, purpose, k, entity));
  }

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace sgne
