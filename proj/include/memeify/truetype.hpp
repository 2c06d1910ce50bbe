#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memeify::render {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// A closed polyline in font units (y up).
using Contour = std::vector<Point>;

/// Minimal TrueType reader: cmap format 4, simple and composite glyf
/// outlines, horizontal metrics. Quadratic segments are flattened.
class Font {
public:
  explicit Font(std::vector<std::uint8_t> data);

  /// The bold sans-serif compiled into the library.
  static const Font& bundled();

  int units_per_em() const noexcept { return units_per_em_; }
  int ascender() const noexcept { return ascender_; }
  int descender() const noexcept { return descender_; }  // negative
  int line_gap() const noexcept { return line_gap_; }

  std::uint16_t glyph_index(char32_t codepoint) const;
  int advance_width(std::uint16_t glyph) const;
  std::vector<Contour> outline(std::uint16_t glyph) const;

private:
  std::uint16_t u16(std::size_t offset) const;
  std::int16_t i16(std::size_t offset) const;
  std::uint32_t u32(std::size_t offset) const;
  std::size_t table(std::string_view tag) const;
  void append_outline(std::uint16_t glyph, const double transform[6], std::vector<Contour>& out, int depth) const;

  std::vector<std::uint8_t> data_;
  std::size_t glyf_ = 0, loca_ = 0, hmtx_ = 0, cmap4_ = 0;
  int units_per_em_ = 0;
  int ascender_ = 0, descender_ = 0, line_gap_ = 0;
  int long_loca_ = 0;
  std::uint16_t glyph_count_ = 0;
  std::uint16_t hmetric_count_ = 0;
};

/// UTF-8 to code points; invalid bytes become U+FFFD.
std::u32string decode_utf8(std::string_view text);

/// 8-bit coverage mask.
struct CoverageMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> alpha;

  CoverageMask(int w, int h) : width(w), height(h), alpha(static_cast<std::size_t>(w) * h, 0) {}
  std::uint8_t& at(int x, int y) { return alpha[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return alpha[static_cast<std::size_t>(y) * width + x]; }
};

/// Fills `mask` with the nonzero-winding coverage of the polygons (pixel
/// coordinates, y down), sampled on an 8x8 grid per pixel.
void rasterize(std::span<const Contour> polygons, CoverageMask& mask);

/// Grayscale dilation with a disk of `radius` pixels.
CoverageMask dilate(const CoverageMask& mask, int radius);

}  // namespace memeify::render
