#include "gnnvault/container.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <string>

namespace gnnvault {

namespace {

constexpr char kMagic[4] = {'G', 'V', 'L', 'T'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 4 + 4 + 4 + 2;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u32(bits);
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint16_t u16() {
    std::uint16_t v = std::uint16_t(b_[pos_]) | std::uint16_t(b_[pos_ + 1]) << 8;
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::uint8_t u8() { return b_[pos_++]; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void write_mask(Writer& w, const std::vector<bool>& mask) {
  const std::size_t n_bytes = (mask.size() + 7) / 8;
  for (std::size_t byte = 0; byte < n_bytes; ++byte) {
    std::uint8_t v = 0;
    for (std::size_t bit = 0; bit < 8; ++bit) {
      std::size_t i = byte * 8 + bit;
      if (i < mask.size() && mask[i]) v |= std::uint8_t(1u << bit);
    }
    w.u8(v);
  }
}

std::vector<bool> read_mask(Reader& r, std::size_t n) {
  std::vector<bool> mask(n, false);
  const std::size_t n_bytes = (n + 7) / 8;
  for (std::size_t byte = 0; byte < n_bytes; ++byte) {
    std::uint8_t v = r.u8();
    for (std::size_t bit = 0; bit < 8; ++bit) {
      std::size_t i = byte * 8 + bit;
      if (i < n) mask[i] = (v >> bit) & 1u;
    }
  }
  return mask;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = ::crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_container(const Graph& graph) {
  const std::size_t n = graph.n_nodes();
  if (n > 0xFFFFFFFFu || graph.n_features() > 0xFFFFFFFFu || graph.n_edges() > 0xFFFFFFFFu ||
      graph.n_classes() > 0xFFFFu) {
    fail(ErrorCode::kInvalidArgument, "graph exceeds GVG v1 field widths");
  }
  Writer w;
  w.buffer().reserve(kHeaderBytes + graph.features().bytes() + graph.n_edges() * 8 + n * 2 +
                     3 * ((n + 7) / 8) + 4);
  w.bytes(kMagic, 4);
  w.u16(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(graph.n_features()));
  w.u32(static_cast<std::uint32_t>(graph.n_edges()));
  w.u16(static_cast<std::uint16_t>(graph.n_classes()));
  for (float v : graph.features().values()) w.f32(v);
  for (const Edge& e : graph.edges()) {
    w.u32(e.src);
    w.u32(e.dst);
  }
  for (std::uint16_t l : graph.labels()) w.u16(l);
  write_mask(w, graph.masks().train);
  write_mask(w, graph.masks().val);
  write_mask(w, graph.masks().test);
  std::uint32_t crc = crc32(w.buffer());
  w.u32(crc);
  return std::move(w.buffer());
}

Graph decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorCode::kBadMagic, "not a GVG container (bad magic)");
  }
  if (bytes.size() < kHeaderBytes) {
    fail(ErrorCode::kTruncated, "GVG header truncated");
  }
  Reader r(bytes);
  r.skip(4);
  const std::uint16_t version = r.u16();
  if (version != kContainerVersion) {
    fail(ErrorCode::kUnsupportedVersion, "unsupported GVG version " + std::to_string(version));
  }
  const std::uint64_t n = r.u32();
  const std::uint64_t d = r.u32();
  const std::uint64_t m = r.u32();
  const std::uint16_t c = r.u16();
  const std::uint64_t expected =
      kHeaderBytes + n * d * 4 + m * 8 + n * 2 + 3 * ((n + 7) / 8) + 4;
  if (bytes.size() < expected) {
    fail(ErrorCode::kTruncated, "GVG payload truncated: have " + std::to_string(bytes.size()) +
                                    " bytes, need " + std::to_string(expected));
  }
  if (bytes.size() > expected) {
    fail(ErrorCode::kMalformedGraph, "GVG has trailing bytes after checksum");
  }
  Reader tail(bytes.subspan(expected - 4));
  const std::uint32_t stored = tail.u32();
  if (crc32(bytes.first(expected - 4)) != stored) {
    fail(ErrorCode::kChecksumMismatch, "GVG CRC32 mismatch");
  }
  DenseMatrix x(n, d);
  for (float& v : x.values()) v = r.f32();
  std::vector<Edge> edges(m);
  for (std::uint64_t t = 0; t < m; ++t) {
    edges[t].src = r.u32();
    edges[t].dst = r.u32();
    if (edges[t].src >= n || edges[t].dst >= n) {
      fail(ErrorCode::kIndexOutOfRange, "edge " + std::to_string(t) + " endpoint >= n_nodes");
    }
  }
  std::vector<std::uint16_t> labels(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    labels[i] = r.u16();
    if (labels[i] >= c) {
      fail(ErrorCode::kIndexOutOfRange,
           "label of node " + std::to_string(i) + " >= n_classes " + std::to_string(c));
    }
  }
  Masks masks;
  masks.train = read_mask(r, n);
  masks.val = read_mask(r, n);
  masks.test = read_mask(r, n);
  return Graph(std::move(x), std::move(edges), std::move(labels), c, std::move(masks));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    fail(ErrorCode::kIo, "cannot read " + path.string());
  }
  return bytes;
}

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create directory " + dir.string() + ": " + ec.message());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
}

Graph read_container(const std::filesystem::path& path) {
  return decode_container(read_file(path));
}

void write_container(const Graph& graph, const std::filesystem::path& path) {
  write_file(path, encode_container(graph));
}

}  // namespace gnnvault
