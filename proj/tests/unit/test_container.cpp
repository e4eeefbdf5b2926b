#include <cstring>
#include <fstream>

#include "helpers.hpp"

using namespace gnnvault;

namespace {

constexpr std::size_t kHeader = 20;

void reseal(std::vector<std::uint8_t>& bytes) {
  std::uint32_t c = crc32(std::span(bytes).first(bytes.size() - 4));
  std::memcpy(bytes.data() + bytes.size() - 4, &c, 4);
}

}  // namespace

TEST_CASE("crc32 matches the standard check value") {
  const char* s = "123456789";
  CHECK(crc32(std::span(reinterpret_cast<const std::uint8_t*>(s), 9)) == 0xCBF43926u);
}

TEST_CASE("GVG round trip on an SBM graph") {
  Graph g = sbm_generate(testing::small_sbm());
  auto bytes = encode_container(g);
  CHECK(decode_container(bytes) == g);

  testing::TempDir dir("gvg");
  write_container(g, dir.path / "g.gvg");
  CHECK(read_container(dir.path / "g.gvg") == g);
  CHECK(read_file(dir.path / "g.gvg") == bytes);
}

TEST_CASE("planetoid fixtures carry the published statistics") {
  Graph cora = read_container(testing::fixture("cora.gvg"));
  CHECK(cora.n_nodes() == 2708);
  CHECK(cora.n_edges() == 10556);
  CHECK(cora.n_features() == 1433);
  CHECK(cora.n_classes() == 7);
  CHECK(count(cora.masks().train) == 140);

  Graph citeseer = read_container(testing::fixture("citeseer.gvg"));
  CHECK(citeseer.n_nodes() == 3327);
  CHECK(citeseer.n_features() == 3703);
  CHECK(citeseer.n_classes() == 6);
  CHECK(count(citeseer.masks().train) == 120);
}

TEST_CASE("malformed containers are rejected with specific errors") {
  Graph g = sbm_generate(testing::small_sbm());
  const auto good = encode_container(g);

  SUBCASE("3-byte file") {
    std::vector<std::uint8_t> b = {'G', 'V', 'L'};
    CHECK_ERROR_CODE(decode_container(b), ErrorCode::kBadMagic);
  }
  SUBCASE("wrong magic") {
    auto b = good;
    b[0] = 'X';
    CHECK_ERROR_CODE(decode_container(b), ErrorCode::kBadMagic);
  }
  SUBCASE("header cut short") {
    std::vector<std::uint8_t> b(good.begin(), good.begin() + 10);
    CHECK_ERROR_CODE(decode_container(b), ErrorCode::kTruncated);
  }
  SUBCASE("payload cut short") {
    std::vector<std::uint8_t> b(good.begin(), good.end() - 7);
    CHECK_ERROR_CODE(decode_container(b), ErrorCode::kTruncated);
  }
  SUBCASE("trailing bytes") {
    auto b = good;
    b.push_back(0);
    CHECK_ERROR_CODE(decode_container(b), ErrorCode::kMalformedGraph);
  }
  SUBCASE("unsupported version") {
    auto b = good;
    b[4] = 2;
    reseal(b);
    CHECK_ERROR_CODE(decode_container(b), ErrorCode::kUnsupportedVersion);
  }
  SUBCASE("flipped feature byte breaks the checksum") {
    auto b = good;
    b[kHeader + 3] ^= 0x40;
    CHECK_ERROR_CODE(decode_container(b), ErrorCode::kChecksumMismatch);
  }
  SUBCASE("edge endpoint out of range with a valid checksum") {
    auto b = good;
    std::size_t edge_off = kHeader + g.n_nodes() * g.n_features() * 4;
    std::uint32_t bad = static_cast<std::uint32_t>(g.n_nodes()) + 5;
    std::memcpy(b.data() + edge_off, &bad, 4);
    reseal(b);
    CHECK_ERROR_CODE(decode_container(b), ErrorCode::kIndexOutOfRange);
  }
  SUBCASE("label out of range with a valid checksum") {
    auto b = good;
    std::size_t label_off = kHeader + g.n_nodes() * g.n_features() * 4 + g.n_edges() * 8;
    std::uint16_t bad = 999;
    std::memcpy(b.data() + label_off, &bad, 2);
    reseal(b);
    CHECK_ERROR_CODE(decode_container(b), ErrorCode::kIndexOutOfRange);
  }
  SUBCASE("asymmetric edge list with a valid checksum") {
    auto b = good;
    std::size_t edge_off = kHeader + g.n_nodes() * g.n_features() * 4;
    // Redirect the first edge's destination to a node it is not linked to.
    std::uint32_t src, dst;
    std::memcpy(&src, b.data() + edge_off, 4);
    std::memcpy(&dst, b.data() + edge_off + 4, 4);
    std::uint32_t other = dst;
    for (std::uint32_t v = 0; v < dst; ++v) {
      if (v != src && !g.has_edge(src, v)) {
        other = v;
        break;
      }
    }
    REQUIRE(other != dst);
    std::memcpy(b.data() + edge_off + 4, &other, 4);
    reseal(b);
    CHECK_ERROR_CODE(decode_container(b), ErrorCode::kMalformedGraph);
  }
}

TEST_CASE("file errors are I/O errors") {
  testing::TempDir dir("gvg-io");
  CHECK_ERROR_CODE(read_container(dir.path / "missing.gvg"), ErrorCode::kIo);
  write_file(dir.path / "plain", std::vector<std::uint8_t>{1});
  Graph g = sbm_generate(testing::small_sbm());
  CHECK_ERROR_CODE(write_container(g, dir.path / "plain" / "x.gvg"), ErrorCode::kIo);
}
