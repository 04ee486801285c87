#ifndef FLOWFORGE_FLO_IO_HPP
#define FLOWFORGE_FLO_IO_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "flowforge/grid.hpp"

namespace flowforge {

using Bytes = std::vector<std::uint8_t>;

/// Tag stored in the first four bytes of a `.flo` file ("PIEH" as float).
inline constexpr float kFloMagic = 202021.25f;

/// Decodes a Middlebury `.flo` stream. Throws BadMagic, Truncated or BadDims.
FlowFieldf read_flo(std::span<const std::uint8_t> bytes);

/// Canonical little-endian `.flo` encoding; the inverse of read_flo bit for bit.
Bytes write_flo(const FlowFieldf& flow);

FlowFieldf load_flo(const std::filesystem::path& path);
void save_flo(const std::filesystem::path& path, const FlowFieldf& flow);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

namespace detail {

void put_u32(Bytes& out, std::uint32_t v);
void put_f32(Bytes& out, float v);
std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset);
float get_f32(std::span<const std::uint8_t> in, std::size_t offset);

}  // namespace detail

}  // namespace flowforge

#endif  // FLOWFORGE_FLO_IO_HPP
