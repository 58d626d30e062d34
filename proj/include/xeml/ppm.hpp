#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xeml/tensor.hpp"

namespace xeml {

/// Decodes a binary PPM (P6) into a [3,H,W] tensor with values sample/maxval.
/// Header comments are accepted; maxval up to 65535 (two-byte big-endian
/// samples above 255). Any malformation raises IngestionError naming `source`.
Tensor decode_ppm(std::span<const std::uint8_t> bytes, const std::string& source);

/// Encodes a [3,H,W] tensor as P6 with maxval 255, rounding v*255 to the
/// nearest integer after clamping to [0,1].
std::vector<std::uint8_t> encode_ppm(const Tensor& image);

Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& image);

}  // namespace xeml
