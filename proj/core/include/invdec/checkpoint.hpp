#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "invdec/model.hpp"
#include "invdec/rng.hpp"
#include "invdec/tensor.hpp"

namespace invdec::ckpt {

inline constexpr char kMagic[8] = {'I', 'N', 'V', 'D', 'E', 'C', 'K', '1'};
inline constexpr std::uint32_t kVersion = 1;

/// In-memory form of a checkpoint file. The byte layout is described in
/// docs/checkpoint-format.md.
struct Checkpoint {
  std::string config_text;     ///< resolved run configuration
  std::string norm_stats_ref;  ///< path of the normalization stats file, may be empty
  std::vector<std::pair<std::string, std::uint64_t>> rng_seeds;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

std::string encode(const Checkpoint& ck);
/// Throws FormatError on a bad magic, unknown version or truncated input.
Checkpoint decode(const std::string& bytes);

void save(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load(const std::filesystem::path& path);

/// Snapshot of every parameter in store order plus the seeds of the
/// standard streams.
Checkpoint capture(const model::ModelParams& params, std::string config_text,
                   std::string norm_stats_ref, std::uint64_t seed);

/// Copies tensors into `params` by name. Throws FormatError when a
/// parameter is missing or its shape differs.
void restore(const Checkpoint& ck, model::ModelParams& params);

}  // namespace invdec::ckpt
