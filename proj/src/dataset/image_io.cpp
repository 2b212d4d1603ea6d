#include "auggen/dataset/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace auggen::dataset {

namespace {

constexpr char kRawMagic[8] = {'A', 'G', 'I', 'M', 'G', '0', '0', '1'};

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, -1.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround((c + 1.0f) * 127.5f));
}

float from_byte(std::uint8_t q) { return static_cast<float>(q) / 127.5f - 1.0f; }

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

void write_png(const std::filesystem::path& path, const Tensor& image) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (c != 1 && c != 3) throw InvalidArgument("png supports 1 or 3 channels");
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw FormatError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng init failed");
  }
  std::vector<std::uint8_t> rows(h * w * c);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        rows[(y * w + x) * c + ch] = to_byte(image[(ch * h + y) * w + x]);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng write failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) png_write_row(png, rows.data() + y * w * c);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError("cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("malformed png " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const auto w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported png layout in " + path.string());
  }
  const std::size_t c = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  std::vector<std::uint8_t> rows(static_cast<std::size_t>(h) * w * c);
  for (std::size_t y = 0; y < h; ++y) png_read_row(png, rows.data() + y * w * c, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  Tensor image({c, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        image[(ch * h + y) * w + x] = from_byte(rows[(y * w + x) * c + ch]);
  return image;
}

}  // namespace

ImageFormat parse_image_format(std::string_view s) {
  if (s == "raw") return ImageFormat::raw;
  if (s == "png") return ImageFormat::png;
  throw InvalidArgument("unknown image format: " + std::string(s));
}

std::string_view to_string(ImageFormat f) { return f == ImageFormat::raw ? "raw" : "png"; }
std::string_view file_extension(ImageFormat f) { return f == ImageFormat::raw ? ".raw" : ".png"; }

void quantize_to_8bit(Tensor& image) {
  for (auto& v : image.values()) v = from_byte(to_byte(v));
}

void write_image(const std::filesystem::path& path, const Tensor& image, ImageFormat format) {
  if (image.rank() != 3) throw ShapeError("images must be [channels, height, width]");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (format == ImageFormat::png) {
    write_png(path, image);
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(kRawMagic, sizeof(kRawMagic));
  for (std::size_t d = 0; d < 3; ++d) {
    const auto e = static_cast<std::uint32_t>(image.dim(d));
    out.write(reinterpret_cast<const char*>(&e), sizeof(e));
  }
  out.write(reinterpret_cast<const char*>(image.data()),
            static_cast<std::streamsize>(image.size() * sizeof(float)));
}

Tensor read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kRawMagic, sizeof(magic)) != 0) {
    in.close();
    return read_png(path);
  }
  std::uint32_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  Tensor image({dims[0], dims[1], dims[2]});
  in.read(reinterpret_cast<char*>(image.data()), static_cast<std::streamsize>(image.size() * sizeof(float)));
  if (!in) throw FormatError("truncated image " + path.string());
  return image;
}

}  // namespace auggen::dataset
