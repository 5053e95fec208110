#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "skydehaze/image.hpp"

namespace skydehaze {

using Bytes = std::vector<std::uint8_t>;

// Decodes PNG (8-bit gray/RGB/RGBA/palette; alpha dropped) or binary PPM
// (P6, maxval <= 255). Samples map to v / maxval. Errors are kDecode and name
// the byte offset where decoding failed.
ColorImage decode_image(std::span<const std::uint8_t> bytes);

// 8-bit RGB PNG; samples written as round(v * 255) clamped to [0,255].
Bytes encode_png(const ColorImage& img);
// 8-bit grayscale PNG of a scalar map (values * 255, rounded, clamped).
Bytes encode_png(const ScalarMap& map);
// 8-bit grayscale PNG with values {0, 255}.
Bytes encode_png(const BinaryMask& mask);
Bytes encode_ppm(const ColorImage& img);

std::uint8_t to_byte(double v) noexcept;

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

ColorImage load_image(const std::filesystem::path& path);
// Writes PPM when the extension is .ppm, PNG otherwise.
void save_image(const std::filesystem::path& path, const ColorImage& img);
void save_image(const std::filesystem::path& path, const ScalarMap& map);
void save_image(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace skydehaze
