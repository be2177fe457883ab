#include "gsa/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gsa/error.hpp"

namespace gsa {

namespace {

constexpr char kMagic[4] = {'G', 'T', 'E', 'N'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string encode_gten(const Tensor& t) {
  std::string out(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  out.reserve(out.size() + 4 * t.numel());
  for (real v : t.values()) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Tensor decode_gten(std::string_view bytes, const std::string& what) {
  if (bytes.size() < 8) throw FormatError(what + ": truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(what + ": bad magic bytes (expected GTEN)");
  }
  const std::uint32_t rank = get_u32(bytes, 4);
  if (rank == 0 || rank > 16) {
    throw FormatError(what + ": unsupported rank " + std::to_string(rank));
  }
  if (bytes.size() < 8 + 4 * static_cast<std::size_t>(rank)) {
    throw FormatError(what + ": truncated dims");
  }
  Shape shape(rank);
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = get_u32(bytes, 8 + 4 * i);
    if (shape[i] == 0) throw FormatError(what + ": zero dimension");
    n *= shape[i];
  }
  const std::size_t offset = 8 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() != offset + 4 * n) {
    throw FormatError(what + ": expected " + std::to_string(4 * n) +
                      " value bytes, found " +
                      std::to_string(bytes.size() - offset));
  }
  std::vector<real> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, offset + 4 * i));
  }
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  write_file(path, encode_gten(t));
}

Tensor load_tensor(const std::filesystem::path& path) {
  return decode_gten(read_file(path), path.string());
}

void round_to_f32(Tensor& t) {
  for (auto& v : t.values()) v = static_cast<float>(v);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::string file_checksum(const std::filesystem::path& path) {
  return hex64(fnv1a64(read_file(path)));
}

}  // namespace gsa
