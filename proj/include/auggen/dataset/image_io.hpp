#pragma once

#include <filesystem>
#include <string_view>

#include "auggen/numerics/tensor.hpp"

namespace auggen::dataset {

using numerics::Tensor;

enum class ImageFormat { raw, png };

ImageFormat parse_image_format(std::string_view s);
std::string_view to_string(ImageFormat f);
std::string_view file_extension(ImageFormat f);

// Images are [channels, height, width] with values in [-1, 1].
//
// raw: "AGIMG001", u32 channels, u32 height, u32 width, f32 values (LE).
//      Round-trips any tensor bit-exactly.
// png: 8-bit grayscale (1 channel) or RGB (3 channels); value v is stored as
//      q = round((v + 1) * 127.5). Round-trips bit-exactly for images already
//      on that grid (see quantize_to_8bit).
void write_image(const std::filesystem::path& path, const Tensor& image, ImageFormat format);
Tensor read_image(const std::filesystem::path& path);

// Snaps values to the 8-bit grid q / 127.5 - 1 after clamping to [-1, 1].
void quantize_to_8bit(Tensor& image);

}  // namespace auggen::dataset
