#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xeml/encoder.hpp"

namespace xeml {

// Binary layout, all integers little-endian:
//
//   "XEML1"
//   u32 depth, u32 channels, u32 input_size, u32 input_channels
//   u32 n_params,  n_params  x record
//   u32 n_buffers, n_buffers x record
//
//   record := u32 path_len, path bytes, u32 rank, rank x u32 extent,
//             u64 n_floats, n_floats x f32 (IEEE-754, little-endian)

inline constexpr char kCheckpointMagic[] = "XEML1";

struct Checkpoint {
  EncoderConfig config;
  ParamStore params;
};

std::vector<std::uint8_t> serialize_checkpoint(const EncoderConfig& config, const ParamStore& params);

/// `source` names the origin in error messages. The parameter layout must
/// match build_encoder(config) exactly.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source);

void save_checkpoint(const std::filesystem::path& path, const EncoderConfig& config,
                     const ParamStore& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::uint64_t file_hash(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace xeml
