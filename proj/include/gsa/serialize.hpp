#pragma once

// GTEN tensor files: magic "GTEN", u32 rank, rank x u32 dims, then the
// values as f32, all little-endian, row-major.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "gsa/tensor.hpp"

namespace gsa {

std::string encode_gten(const Tensor& t);
// `what` names the source in error messages.
Tensor decode_gten(std::string_view bytes, const std::string& what = "tensor");

void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

// Values survive a GTEN round trip unchanged iff they are f32-representable.
void round_to_f32(Tensor& t);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
std::string file_checksum(const std::filesystem::path& path);

}  // namespace gsa
