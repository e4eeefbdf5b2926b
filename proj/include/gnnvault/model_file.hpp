#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gnnvault/nn.hpp"

namespace gnnvault {

/// GVMD model file, little-endian:
///   "GVMD" | u16 version | u16 n_layers |
///   per layer: u32 d_in, u32 d_out, u8 activation (0 none, 1 relu) |
///   per layer: f32 weight[d_in*d_out] (row-major), f32 bias[d_out] |
///   u32 CRC-32 of all preceding bytes
inline constexpr std::uint16_t kModelFileVersion = 1;

std::vector<std::uint8_t> encode_model(const LayerStack& stack);
LayerStack decode_model(std::span<const std::uint8_t> bytes);

void write_model(const LayerStack& stack, const std::filesystem::path& path);
LayerStack read_model(const std::filesystem::path& path);

}  // namespace gnnvault
