#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "../support/fixtures.hpp"
#include "memeify/random.hpp"
#include "memeify/renderer.hpp"

using namespace memeify;
using namespace memeify::render;

namespace {

using fixtures::gradient;
using fixtures::kGolden;

std::string random_words(Rng& rng, std::size_t n) {
  static const char* kWords[] = {"one",  "does",  "not",   "simply", "walk", "into", "the",      "office",
                                 "on",   "a",     "monday", "brace", "your", "self", "meetings", "are",
                                 "coming", "wifi", "down",  "again", "why",  "always", "me",     "now"};
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + std::string(kWords[rng.below(std::size(kWords))]);
  return s;
}

}  // namespace

TEST_CASE("bundled font basics") {
  const Font& font = Font::bundled();
  CHECK(font.units_per_em() == 2048);
  CHECK(font.ascender() > 0);
  CHECK(font.descender() < 0);
  const auto a = font.glyph_index(U'A');
  CHECK(a != 0);
  CHECK(font.advance_width(a) > 0);
  CHECK_FALSE(font.outline(a).empty());
  CHECK(font.outline(font.glyph_index(U' ')).empty());
  // Accented capitals are composite glyphs in this font.
  CHECK(font.outline(font.glyph_index(U'É')).size() >= font.outline(font.glyph_index(U'E')).size());
}

TEST_CASE("utf8 decoding") {
  CHECK(decode_utf8("a\xc3\xa9\xe2\x82\xac") == std::u32string{U'a', U'é', U'€'});
  CHECK(decode_utf8("\xff") == std::u32string{U'�'});
}

TEST_CASE("rasterized square has exact area") {
  // Square with corners on half-pixel boundaries: edge pixels are half covered.
  const std::vector<Contour> square = {{{2.5, 2.5}, {6.5, 2.5}, {6.5, 6.5}, {2.5, 6.5}}};
  CoverageMask mask(10, 10);
  rasterize(square, mask);
  CHECK(mask.at(4, 4) == 255);
  CHECK(mask.at(0, 0) == 0);
  CHECK(std::abs(int(mask.at(2, 4)) - 128) <= 1);
  CHECK(std::abs(int(mask.at(2, 2)) - 64) <= 1);
  double area = 0;
  for (auto a : mask.alpha) area += a / 255.0;
  CHECK(area == doctest::Approx(16.0).epsilon(0.01));
}

TEST_CASE("nonzero winding fills overlapping contours once") {
  const std::vector<Contour> twice = {{{1, 1}, {5, 1}, {5, 5}, {1, 5}}, {{1, 1}, {5, 1}, {5, 5}, {1, 5}}};
  const std::vector<Contour> hole = {{{0, 0}, {8, 0}, {8, 8}, {0, 8}}, {{2, 2}, {2, 6}, {6, 6}, {6, 2}}};
  CoverageMask a(8, 8), b(8, 8);
  rasterize(twice, a);
  rasterize(hole, b);
  CHECK(a.at(3, 3) == 255);
  CHECK(b.at(4, 4) == 0);  // opposite orientation cuts a hole
  CHECK(b.at(1, 1) == 255);
}

TEST_CASE("dilation grows coverage by the radius") {
  CoverageMask m(21, 21);
  m.at(10, 10) = 255;
  const auto d = dilate(m, 3);
  CHECK(d.at(13, 10) == 255);
  CHECK(d.at(10, 7) == 255);
  CHECK(d.at(14, 10) == 0);
  CHECK(d.at(13, 13) == 0);  // outside the disk
}

TEST_CASE("wrapping is greedy and monotone") {
  const Font& font = Font::bundled();
  CHECK(wrap_words(font, "a b c", 20, 1e9)->size() == 1);
  CHECK_FALSE(wrap_words(font, "supercalifragilistic", 40, 50.0));
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text = random_words(rng, 1 + rng.below(6));
    const double width = 80 + rng.below(300);
    const int px = 12 + static_cast<int>(rng.below(20));
    auto before = wrap_words(font, text, px, width);
    auto after = wrap_words(font, text + " " + random_words(rng, 1), px, width);
    if (before && after) CHECK(after->size() >= before->size());
    if (before) {
      for (const auto& line : *before) {
        if (line.find(' ') != std::string::npos) CHECK(text_width(font, line, px) <= width);
      }
    }
  }
}

TEST_CASE("dimensions are preserved and blocks stay inside the image") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 64 + static_cast<int>(rng.below(600));
    const int h = 64 + static_cast<int>(rng.below(600));
    const auto top = random_words(rng, 1 + rng.below(4));
    const auto bottom = rng.below(3) == 0 ? std::string() : random_words(rng, 1 + rng.below(5));
    Rendered r;
    try {
      r = render::render(gradient(w, h), top, bottom);
    } catch (const CaptionTooLong&) {
      continue;  // a narrow image may not fit a long word; still a valid outcome
    }
    CHECK(r.image.width == w);
    CHECK(r.image.height == h);
    const auto png = encode_png(r.image);
    const auto decoded = decode_image(png);
    CHECK(decoded.width == w);
    CHECK(decoded.height == h);
    const auto& t = r.layout.top;
    CHECK(t.left >= 0);
    CHECK(t.top >= 0);
    CHECK(t.right <= w);
    CHECK(t.bottom <= h);
    CHECK(r.layout.font_px >= static_cast<int>(0.05 * h) - 1);
    CHECK(r.layout.font_px <= static_cast<int>(0.10 * h) + 1);
    if (r.layout.bottom) {
      CHECK(r.layout.bottom->bottom <= h);
      CHECK(r.layout.bottom->left >= 0);
      CHECK(r.layout.bottom->right <= w);
      CHECK(t.bottom <= r.layout.bottom->top);
    }
  }
}

TEST_CASE("empty bottom draws only the top block") {
  const auto base = gradient(300, 300);
  const auto r = render::render(base, "hello there", "");
  CHECK_FALSE(r.layout.bottom);
  bool top_changed = false;
  for (int y = 0; y < 300; ++y) {
    for (int x = 0; x < 300; ++x) {
      const bool same = std::equal(r.image.at(x, y), r.image.at(x, y) + 3, base.at(x, y));
      if (y >= r.layout.top.bottom) CHECK(same);
      else top_changed |= !same;
    }
  }
  CHECK(top_changed);
}

TEST_CASE("render errors") {
  CHECK_THROWS_AS(render::render(gradient(63, 200), "hi", ""), Error);
  CHECK_THROWS_AS(render::render(gradient(200, 63), "hi", ""), Error);
  CHECK_THROWS_AS(render::render(gradient(200, 200), "", "bottom"), Error);
  CHECK_THROWS_AS(render::render(gradient(200, 200), "   ", "bottom"), Error);
  CHECK_THROWS_AS(render::render(gradient(100, 100), "supercalifragilisticexpialidociousness", ""), CaptionTooLong);
  std::string essay;
  for (int i = 0; i < 200; ++i) essay += "word ";
  CHECK_THROWS_AS(render::render(gradient(200, 200), essay, essay), CaptionTooLong);
}

TEST_CASE("shrink to fit picks a smaller font for longer text") {
  const auto base = gradient(400, 300);
  const auto short_r = render::render(base, "short", "");
  std::string longer;
  for (int i = 0; i < 30; ++i) longer += "much longer text ";
  const auto long_r = render::render(base, longer, "");
  CHECK(short_r.layout.font_px == 30);
  CHECK(long_r.layout.font_px < short_r.layout.font_px);
}

TEST_CASE("renders are byte-identical and match the golden file") {
  captiongen::GeneratedCaption caption{"imminent_ned", "brace yourselves", "golden files are coming", 7, "fixture"};
  const auto base = gradient(320, 240);
  const auto a = render_meme(base, caption);
  const auto b = render_meme(base, caption);
  CHECK(a == b);
  if (std::getenv("MEMEIFY_UPDATE_GOLDEN")) {
    std::ofstream out(kGolden, std::ios::binary);
    out.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size()));
  }
  const auto golden = read_file_bytes(kGolden);
  CHECK(golden == a);
}
