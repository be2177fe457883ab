#include "gsa/checkpoint.hpp"

#include <cstdint>

#include "gsa/config.hpp"
#include "gsa/error.hpp"
#include "gsa/serialize.hpp"

namespace gsa {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::string_view take_chunk(std::string_view bytes, std::size_t& pos,
                            const std::string& what) {
  if (bytes.size() - pos < 8) throw FormatError(what + ": truncated length prefix");
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) {
    n |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  pos += 8;
  if (bytes.size() - pos < n) throw FormatError(what + ": truncated chunk");
  auto chunk = bytes.substr(pos, n);
  pos += n;
  return chunk;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  auto header = ckpt.header;
  header.emplace_back("tensors", std::to_string(ckpt.tensors.size()));
  const std::string text = format_key_values(header);
  std::string out;
  put_u64(out, text.size());
  out += text;
  for (const auto& t : ckpt.tensors) {
    const std::string g = encode_gten(t);
    put_u64(out, g.size());
    out += g;
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what) {
  std::size_t pos = 0;
  const auto text = take_chunk(bytes, pos, what);
  auto cfg = KeyValueConfig::parse(text, what);
  Checkpoint ckpt;
  long count = -1;
  for (const auto& [k, v] : cfg.entries()) {
    if (k == "tensors") {
      count = cfg.take_int("tensors");
    } else {
      ckpt.header.emplace_back(k, v);
    }
  }
  if (count < 0) throw FormatError(what + ": header lacks 'tensors'");
  for (long i = 0; i < count; ++i) {
    ckpt.tensors.push_back(
        decode_gten(take_chunk(bytes, pos, what), what + " tensor " + std::to_string(i)));
  }
  if (pos != bytes.size()) throw FormatError(what + ": trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace gsa
