#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memeify/captiongen.hpp"
#include "memeify/image.hpp"
#include "memeify/truetype.hpp"

namespace memeify::render {

struct Color {
  std::uint8_t r = 0, g = 0, b = 0;
};

/// Classic image-macro layout: uppercase white text with a black outline,
/// top part anchored top-centre, bottom part bottom-centre, wrapped at word
/// boundaries. Fractions are of the image height unless noted.
struct RenderSpec {
  double font_fraction = 0.10;
  double min_font_fraction = 0.05;
  double outline_fraction = 0.05;  // of the font size
  double margin_fraction = 0.04;   // of the width (horizontal) and height (vertical)
  bool uppercase = true;
  Color fill{255, 255, 255};
  Color outline{0, 0, 0};
};

inline constexpr int kMinRenderSize = 64;

class CaptionTooLong : public Error {
public:
  using Error::Error;
};

struct TextBlock {
  std::vector<std::string> lines;
  int left = 0, top = 0, right = 0, bottom = 0;  // bounding box including the outline
};

struct Layout {
  int font_px = 0;
  int outline_px = 0;
  TextBlock top;
  std::optional<TextBlock> bottom;
};

struct Rendered {
  Image image;
  Layout layout;
};

/// Width in pixels of `text` set at `font_px` (advance widths, no kerning).
double text_width(const Font& font, std::string_view text, int font_px);

/// Greedy word wrap. Returns nullopt when a single word is wider than
/// `max_width`.
std::optional<std::vector<std::string>> wrap_words(const Font& font, std::string_view text, int font_px,
                                                   double max_width);

/// Chooses the largest font size (from font_fraction down to
/// min_font_fraction of the height) at which both parts fit without
/// overlapping, then draws them. Throws CaptionTooLong if no size fits,
/// and Error for images smaller than 64x64 or an empty top part.
Rendered render(const Image& base, std::string_view top, std::string_view bottom, const RenderSpec& spec = {},
                const Font& font = Font::bundled());

/// render() encoded as PNG. The output has the base image's dimensions.
std::vector<std::uint8_t> render_meme(const Image& base, const captiongen::GeneratedCaption& caption,
                                      const RenderSpec& spec = {});

}  // namespace memeify::render
