#include "invdec/rng.hpp"

namespace invdec {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::uint64_t RngStreams::stream_seed(std::string_view name) const {
  // splitmix-style finalizer over (seed, name) so nearby seeds diverge.
  std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ULL * (fnv1a64(name) | 1ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RngStreams::Engine& RngStreams::stream(const std::string& name) {
  auto it = streams_.find(name);
  if (it == streams_.end()) it = streams_.emplace(name, Engine(stream_seed(name))).first;
  return it->second;
}

std::vector<std::string> RngStreams::names() const {
  std::vector<std::string> out;
  out.reserve(streams_.size());
  for (const auto& [name, engine] : streams_) out.push_back(name);
  return out;
}

}  // namespace invdec
