#ifndef FLOWFORGE_IMAGE_IO_HPP
#define FLOWFORGE_IMAGE_IO_HPP

#include <filesystem>

#include "flowforge/flo_io.hpp"
#include "flowforge/grid.hpp"

namespace flowforge {

// Binary PPM (P6, 3 channels) and PGM (P5, 1 channel), 8 bits per sample.
// Values in [0,1] are mapped linearly to 0..255 with rounding; out-of-range
// values are clamped.

Bytes encode_pnm(const Gridf& image);
Gridf decode_pnm(std::span<const std::uint8_t> bytes);

void save_pnm(const std::filesystem::path& path, const Gridf& image);
Gridf load_pnm(const std::filesystem::path& path);

}  // namespace flowforge

#endif  // FLOWFORGE_IMAGE_IO_HPP
