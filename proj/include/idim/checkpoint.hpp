// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "idim/nn.hpp"

namespace idim {

struct CheckpointMeta {
  ModelSpec model;
  std::size_t step = 0;
  std::uint64_t seed = 0;
  std::string task;

  bool operator==(const CheckpointMeta&) const = default;
};

/**
 * Writes `path` in the IDCK layout ("IDCK", u32 version 1, u64 D, u32 m,
 * per layer u32 name length + UTF-8 name + u64 offset + u64 length, then D
 * little-endian f32 values) and `path` + ".json" with the metadata.
 */
void save_checkpoint(const std::filesystem::path& path, const ParameterVector& params,
                     const CheckpointMeta& meta);

// Throws FormatError on bad magic, version, truncation or an invalid table.
ParameterVector load_checkpoint(const std::filesystem::path& path);
CheckpointMeta load_checkpoint_meta(const std::filesystem::path& path);

}  // namespace idim
