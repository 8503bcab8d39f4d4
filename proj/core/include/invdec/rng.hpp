#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace invdec {

/// 64-bit FNV-1a hash; stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view bytes);

/// A family of named random streams derived from one master seed.
///
/// Each consumer (weight init per module, dropout per stack, data shuffle)
/// draws from its own stream, so enabling or skipping one consumer never
/// shifts the draws seen by another.
class RngStreams {
 public:
  using Engine = std::mt19937_64;

  explicit RngStreams(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  Engine& stream(const std::string& name);
  /// Seed value used for `name`; recorded in checkpoints.
  std::uint64_t stream_seed(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::uint64_t seed_;
  std::map<std::string, Engine, std::less<>> streams_;
};

}  // namespace invdec
