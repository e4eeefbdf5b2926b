#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gnnvault/graph.hpp"

namespace gnnvault {

/// GVG container v1, little-endian:
///   "GVLT" | u16 version | u32 n_nodes | u32 n_features | u32 n_edges |
///   u16 n_classes | f32 features[n_nodes*n_features] (row-major) |
///   (u32 src, u32 dst)[n_edges] | u16 labels[n_nodes] |
///   train, val, test bitsets (ceil(n/8) bytes each, LSB-first) |
///   u32 CRC-32 of all preceding bytes
inline constexpr std::uint16_t kContainerVersion = 1;

std::vector<std::uint8_t> encode_container(const Graph& graph);
/// Throws kBadMagic, kTruncated, kUnsupportedVersion, kChecksumMismatch,
/// kIndexOutOfRange or kMalformedGraph.
Graph decode_container(std::span<const std::uint8_t> bytes);

Graph read_container(const std::filesystem::path& path);
void write_container(const Graph& graph, const std::filesystem::path& path);

/// CRC-32 (IEEE 802.3, as in zlib).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
/// create_directories that throws kIo instead of filesystem_error.
void ensure_directory(const std::filesystem::path& dir);

}  // namespace gnnvault
