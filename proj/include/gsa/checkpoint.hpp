#pragma once

// Checkpoint layout: a u64 little-endian length followed by a "key = value"
// text header, then for each parameter tensor a u64 length followed by its
// GTEN encoding. The header records `tensors = <count>`.

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gsa/tensor.hpp"

namespace gsa {

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<Tensor> tensors;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gsa
