#include "memeify/renderer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace memeify::render {

namespace {

std::string prepare(std::string_view text, bool uppercase) {
  std::string out;
  std::istringstream words{std::string(text)};
  std::string word;
  while (words >> word) {
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  if (uppercase) {
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

double scale_for(const Font& font, int font_px) { return static_cast<double>(font_px) / font.units_per_em(); }

void append_line(const Font& font, std::string_view text, int font_px, double x, double baseline,
                 std::vector<Contour>& out) {
  const double scale = scale_for(font, font_px);
  for (char32_t cp : decode_utf8(text)) {
    const auto glyph = font.glyph_index(cp);
    for (auto& contour : font.outline(glyph)) {
      for (auto& p : contour) p = {x + p.x * scale, baseline - p.y * scale};
      out.push_back(std::move(contour));
    }
    x += font.advance_width(glyph) * scale;
  }
}

std::uint8_t blend(std::uint8_t dst, std::uint8_t color, std::uint8_t alpha) {
  return static_cast<std::uint8_t>((dst * (255 - alpha) + color * alpha + 127) / 255);
}

}  // namespace

double text_width(const Font& font, std::string_view text, int font_px) {
  double units = 0;
  for (char32_t cp : decode_utf8(text)) units += font.advance_width(font.glyph_index(cp));
  return units * scale_for(font, font_px);
}

std::optional<std::vector<std::string>> wrap_words(const Font& font, std::string_view text, int font_px,
                                                   double max_width) {
  std::vector<std::string> lines;
  std::istringstream words{std::string(text)};
  std::string word;
  while (words >> word) {
    if (text_width(font, word, font_px) > max_width) return std::nullopt;
    if (!lines.empty()) {
      const std::string candidate = lines.back() + " " + word;
      if (text_width(font, candidate, font_px) <= max_width) {
        lines.back() = candidate;
        continue;
      }
    }
    lines.push_back(word);
  }
  return lines;
}

Rendered render(const Image& base, std::string_view top, std::string_view bottom, const RenderSpec& spec,
                const Font& font) {
  if (base.width < kMinRenderSize || base.height < kMinRenderSize) {
    throw Error("image " + std::to_string(base.width) + "x" + std::to_string(base.height) +
                " is smaller than the 64x64 minimum");
  }
  const std::string top_text = prepare(top, spec.uppercase);
  const std::string bottom_text = prepare(bottom, spec.uppercase);
  if (top_text.empty()) throw Error("caption top part is empty");

  const int width = base.width;
  const int height = base.height;
  const double margin_x = spec.margin_fraction * width;
  const double margin_y = spec.margin_fraction * height;
  const int largest = static_cast<int>(std::floor(spec.font_fraction * height));
  const int smallest = std::max(1, static_cast<int>(std::ceil(spec.min_font_fraction * height)));

  for (int px = largest; px >= smallest; --px) {
    const double scale = scale_for(font, px);
    const double line_height = (font.ascender() - font.descender() + font.line_gap()) * scale;
    const int outline = std::max(1, static_cast<int>(std::lround(spec.outline_fraction * px)));
    const double max_width = width - 2 * margin_x - 2 * outline;

    auto top_lines = wrap_words(font, top_text, px, max_width);
    if (!top_lines) continue;
    std::optional<std::vector<std::string>> bottom_lines;
    if (!bottom_text.empty()) {
      bottom_lines = wrap_words(font, bottom_text, px, max_width);
      if (!bottom_lines) continue;
    }

    const double top_begin = margin_y;
    const double top_end = top_begin + static_cast<double>(top_lines->size()) * line_height + 2 * outline;
    const double bottom_end = height - margin_y;
    const double bottom_begin =
        bottom_lines ? bottom_end - static_cast<double>(bottom_lines->size()) * line_height - 2 * outline : bottom_end;
    if (top_end > bottom_begin) continue;

    Layout layout;
    layout.font_px = px;
    layout.outline_px = outline;
    std::vector<Contour> contours;
    auto place = [&](const std::vector<std::string>& lines, double block_top) {
      TextBlock block;
      block.lines = lines;
      double left = width, right = 0;
      for (std::size_t i = 0; i < lines.size(); ++i) {
        const double w = text_width(font, lines[i], px);
        const double x = (width - w) / 2;
        const double baseline = block_top + outline + static_cast<double>(i) * line_height + font.ascender() * scale;
        append_line(font, lines[i], px, x, baseline, contours);
        left = std::min(left, x - outline);
        right = std::max(right, x + w + outline);
      }
      block.left = static_cast<int>(std::floor(left));
      block.right = static_cast<int>(std::ceil(right));
      block.top = static_cast<int>(std::floor(block_top));
      block.bottom = static_cast<int>(std::ceil(block_top + static_cast<double>(lines.size()) * line_height + 2 * outline));
      return block;
    };
    layout.top = place(*top_lines, top_begin);
    if (bottom_lines) layout.bottom = place(*bottom_lines, bottom_begin);

    CoverageMask fill(width, height);
    rasterize(contours, fill);
    const CoverageMask stroke = dilate(fill, outline);

    Rendered out{to_rgb(base), std::move(layout)};
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::uint8_t a_stroke = stroke.at(x, y);
        const std::uint8_t a_fill = fill.at(x, y);
        if (a_stroke == 0 && a_fill == 0) continue;
        auto* p = out.image.at(x, y);
        p[0] = blend(blend(p[0], spec.outline.r, a_stroke), spec.fill.r, a_fill);
        p[1] = blend(blend(p[1], spec.outline.g, a_stroke), spec.fill.g, a_fill);
        p[2] = blend(blend(p[2], spec.outline.b, a_stroke), spec.fill.b, a_fill);
      }
    }
    return out;
  }
  throw CaptionTooLong("caption does not fit a " + std::to_string(width) + "x" + std::to_string(height) +
                       " image even at " + std::to_string(smallest) + " px");
}

std::vector<std::uint8_t> render_meme(const Image& base, const captiongen::GeneratedCaption& caption,
                                      const RenderSpec& spec) {
  return encode_png(render(base, caption.top, caption.bottom, spec).image);
}

}  // namespace memeify::render
