#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nn/params.hpp"

namespace crlab::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "CRLP" | u32 version | u32 entry count | per entry: u32 name length, UTF-8
// name, u32 rank, u32 dims..., f32 values. Little-endian throughout. Values are
// stored at 32-bit precision.
std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params);
ParamSet decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& what = "checkpoint");

// Text sidecar: one "name shape digest" line per entry, plus the file digest.
std::string checkpoint_manifest(const ParamSet& params, std::uint64_t file_digest);

// Writes `path` and `path` + ".manifest". Returns the file digest.
std::uint64_t save_checkpoint(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_checkpoint(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

}  // namespace crlab::nn
