#include "adsr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

#include "adsr/error.hpp"

namespace adsr {
namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
  out.write(buf, 8);
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'", 0);
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  nlohmann::json header = ckpt.header;
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    const auto& s = t.shape();
    header["tensors"].push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  const std::string text = header.dump();
  out.write(kCheckpointMagic, kMagicLen);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw Error("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t len = bytes.size();

  if (len < kMagicLen || std::memcmp(p, kCheckpointMagic, kMagicLen) != 0) {
    throw FormatError("bad checkpoint magic", 0);
  }
  std::size_t pos = kMagicLen;
  if (len - pos < 8) throw FormatError("truncated header length", pos);
  const std::uint64_t header_len = get_u64(p + pos);
  pos += 8;
  if (len - pos < header_len) throw FormatError("truncated header", len);

  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what(), pos);
  }
  pos += header_len;

  if (!ckpt.header.contains("tensors") || !ckpt.header["tensors"].is_array()) {
    throw FormatError("checkpoint header lacks a tensors list", kMagicLen + 8);
  }
  for (const auto& entry : ckpt.header["tensors"]) {
    std::vector<std::size_t> dims;
    std::string name;
    try {
      dims = entry.at("shape").get<std::vector<std::size_t>>();
      name = entry.at("name").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad tensor entry: ") + e.what(), kMagicLen + 8);
    }
    if (dims.size() != 4) throw FormatError("tensor shape must have 4 extents", kMagicLen + 8);
    Tensor t(Shape{dims[0], dims[1], dims[2], dims[3]});
    if ((len - pos) / 8 < t.size()) throw FormatError("truncated tensor payload", len);
    for (double& v : t.data()) {
      v = std::bit_cast<double>(get_u64(p + pos));
      pos += 8;
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (pos != len) throw FormatError("trailing bytes after tensor payload", pos);
  ckpt.header.erase("tensors");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace adsr
