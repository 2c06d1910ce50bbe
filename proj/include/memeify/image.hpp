#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "memeify/error.hpp"

namespace memeify {

/// 8-bit raster, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int width, int height, int channels, std::uint8_t fill = 0);

  bool empty() const noexcept { return width <= 0 || height <= 0; }
  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * channels]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * channels];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

class ImageDecodeError : public Error {
public:
  using Error::Error;
};

/// Decodes PNG or JPEG (detected from the signature) to RGB. Alpha is composited
/// over black; 16-bit PNGs are reduced to 8 bits; palettes are expanded.
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::string& path);

/// 8-bit PNG with fixed compression settings, so equal images give equal bytes.
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const Image& image, const std::string& path);

/// Returns an RGB copy (gray replicated across channels).
Image to_rgb(const Image& image);

/// Nearest-neighbour integer upscale.
Image upscale_nearest(const Image& image, int factor);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

}  // namespace memeify
