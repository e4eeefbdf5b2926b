#include "gnnvault/model_file.hpp"

#include <cstring>
#include <string>

#include "gnnvault/container.hpp"

namespace gnnvault {

namespace {

constexpr char kMagic[4] = {'G', 'V', 'M', 'D'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u32(out, bits);
}

struct Cursor {
  std::span<const std::uint8_t> b;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > b.size()) fail(ErrorCode::kTruncated, "GVMD model file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return b[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = std::uint16_t(b[pos]) | std::uint16_t(b[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> encode_model(const LayerStack& stack) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u16(out, kModelFileVersion);
  put_u16(out, static_cast<std::uint16_t>(stack.layers.size()));
  for (const auto& l : stack.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.d_in()));
    put_u32(out, static_cast<std::uint32_t>(l.d_out()));
    out.push_back(static_cast<std::uint8_t>(l.activation));
  }
  for (const auto& l : stack.layers) {
    for (float w : l.weight.values()) put_f32(out, w);
    for (float b : l.bias) put_f32(out, b);
  }
  put_u32(out, crc32(out));
  return out;
}

LayerStack decode_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorCode::kBadMagic, "not a GVMD model file (bad magic)");
  }
  Cursor c{bytes, 4};
  const std::uint16_t version = c.u16();
  if (version != kModelFileVersion) {
    fail(ErrorCode::kUnsupportedVersion, "unsupported GVMD version " + std::to_string(version));
  }
  const std::uint16_t n_layers = c.u16();
  struct Dims {
    std::uint32_t in, out;
    std::uint8_t act;
  };
  std::vector<Dims> dims(n_layers);
  std::uint64_t payload = 0;
  for (auto& d : dims) {
    d.in = c.u32();
    d.out = c.u32();
    d.act = c.u8();
    if (d.act > 1) fail(ErrorCode::kMalformedGraph, "unknown activation tag in GVMD");
    payload += (std::uint64_t(d.in) * d.out + d.out) * 4;
  }
  if (c.pos + payload + 4 > bytes.size()) fail(ErrorCode::kTruncated, "GVMD model file truncated");
  if (c.pos + payload + 4 < bytes.size()) {
    fail(ErrorCode::kMalformedGraph, "GVMD has trailing bytes after checksum");
  }
  Cursor tail{bytes, bytes.size() - 4};
  if (crc32(bytes.first(bytes.size() - 4)) != tail.u32()) {
    fail(ErrorCode::kChecksumMismatch, "GVMD CRC32 mismatch");
  }
  LayerStack stack;
  for (std::size_t l = 0; l < dims.size(); ++l) {
    LayerParams p;
    p.weight = DenseMatrix(dims[l].in, dims[l].out);
    p.bias.resize(dims[l].out);
    p.activation = static_cast<Activation>(dims[l].act);
    for (float& w : p.weight.values()) w = c.f32();
    for (float& b : p.bias) b = c.f32();
    stack.layers.push_back(std::move(p));
  }
  return stack;
}

void write_model(const LayerStack& stack, const std::filesystem::path& path) {
  write_file(path, encode_model(stack));
}

LayerStack read_model(const std::filesystem::path& path) {
  return decode_model(read_file(path));
}

}  // namespace gnnvault
