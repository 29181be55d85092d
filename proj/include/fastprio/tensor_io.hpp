#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fastprio/tensor.hpp"

namespace fastprio {

// On-disk tensor layout:
//   8-byte magic "FPTENSR1", u32 rank, rank x u64 dims, f32 payload;
// all integers and floats little-endian, payload row-major.
inline constexpr std::string_view kTensorMagic = "FPTENSR1";

std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::string_view bytes, const std::string& origin = "<memory>");

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

// Whole-file helpers shared by the other readers/writers.
std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace fastprio
