// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary container of named parameter tensors. Values are stored
// as little-endian IEEE doubles, so save/load round-trips bit-exactly.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmfs/nn.hpp"

namespace mmfs {

inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Mat value;
};

struct Checkpoint {
  /// "init", "base" or "meta".
  std::string stage;
  uint64_t config_hash = 0;
  std::vector<NamedTensor> tensors;
};

Checkpoint snapshot(const ParameterStore& store, std::string stage, uint64_t config_hash);

/// Copies every tensor into the store. Missing, unknown or mis-shaped
/// tensors throw DataError naming the parameter.
void restore(ParameterStore& store, const Checkpoint& ckpt);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmfs
