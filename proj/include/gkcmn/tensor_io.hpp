#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "gkcmn/tensor.hpp"

namespace gkcmn {

// GKTN binary tensor format:
//   "GKTN" | version 0x01 | u8 ndim | ndim x u64 LE extents | f32 LE row-major data
inline constexpr std::uint8_t kGktnVersion = 0x01;

std::string encode_gktn(const Tensor& tensor);
Tensor decode_gktn(std::span<const char> bytes);

void write_gktn(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_gktn(const std::filesystem::path& path);

}  // namespace gkcmn
