// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoints:
//   "PSAPCKPT" | u32 format version | u64 header length | JSON header |
//   f64 parameters, buffers and optimizer velocities in registry order |
//   one keep-bitmap per maskable unit (bit f of byte f/8, LSB first).
// All integers and floats are little-endian.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "psap/config.hpp"
#include "psap/trainer.hpp"

namespace psap {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'P', 'S', 'A', 'P', 'C', 'K', 'P', 'T'};

struct Checkpoint {
  Json config;  // the run configuration, verbatim
  RunState state;
};

std::vector<std::uint8_t> serialize_checkpoint(const Json& config, const RunState& state);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes to a temporary file in the same directory, then renames it over
/// `path`, so an interrupted save leaves the previous checkpoint intact.
void save_checkpoint(const std::filesystem::path& path, const Json& config, const RunState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// The JSON header alone (for inspection).
Json read_checkpoint_header(const std::filesystem::path& path);

Json log_row_to_json(const LogRow& row);
LogRow log_row_from_json(const Json& j);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace psap
