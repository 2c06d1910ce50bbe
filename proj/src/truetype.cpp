#include "memeify/truetype.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>

#include "memeify/error.hpp"

namespace memeify::render {

namespace detail {
extern const std::uint8_t kEmbeddedFont[];
extern const std::size_t kEmbeddedFontSize;
}  // namespace detail

namespace {

constexpr int kCurveSegments = 8;
constexpr int kMaxCompositeDepth = 8;

void flatten_quadratic(Contour& out, Point p0, Point control, Point p1) {
  for (int i = 1; i <= kCurveSegments; ++i) {
    const double t = static_cast<double>(i) / kCurveSegments;
    const double u = 1.0 - t;
    out.push_back({u * u * p0.x + 2 * u * t * control.x + t * t * p1.x,
                   u * u * p0.y + 2 * u * t * control.y + t * t * p1.y});
  }
}

Point midpoint(Point a, Point b) { return {(a.x + b.x) / 2, (a.y + b.y) / 2}; }

}  // namespace

Font::Font(std::vector<std::uint8_t> data) : data_(std::move(data)) {
  if (data_.size() < 12) throw Error("font: file too short");
  const std::size_t head = table("head");
  const std::size_t maxp = table("maxp");
  const std::size_t hhea = table("hhea");
  const std::size_t cmap = table("cmap");
  glyf_ = table("glyf");
  loca_ = table("loca");
  hmtx_ = table("hmtx");
  units_per_em_ = u16(head + 18);
  long_loca_ = i16(head + 50);
  glyph_count_ = u16(maxp + 4);
  ascender_ = i16(hhea + 4);
  descender_ = i16(hhea + 6);
  line_gap_ = i16(hhea + 8);
  hmetric_count_ = u16(hhea + 34);
  if (units_per_em_ == 0 || hmetric_count_ == 0) throw Error("font: bad header");

  const std::uint16_t subtables = u16(cmap + 2);
  for (std::uint16_t i = 0; i < subtables && cmap4_ == 0; ++i) {
    const std::size_t record = cmap + 4 + static_cast<std::size_t>(i) * 8;
    const std::uint16_t platform = u16(record);
    const std::uint16_t encoding = u16(record + 2);
    const std::size_t offset = cmap + u32(record + 4);
    if (((platform == 3 && encoding == 1) || platform == 0) && u16(offset) == 4) cmap4_ = offset;
  }
  if (cmap4_ == 0) throw Error("font: no format 4 Unicode cmap");
}

const Font& Font::bundled() {
  static const Font font(
      std::vector<std::uint8_t>(detail::kEmbeddedFont, detail::kEmbeddedFont + detail::kEmbeddedFontSize));
  return font;
}

std::uint16_t Font::u16(std::size_t offset) const {
  if (offset + 2 > data_.size()) throw Error("font: read past end");
  return static_cast<std::uint16_t>(data_[offset] << 8 | data_[offset + 1]);
}

std::int16_t Font::i16(std::size_t offset) const { return static_cast<std::int16_t>(u16(offset)); }

std::uint32_t Font::u32(std::size_t offset) const {
  return static_cast<std::uint32_t>(u16(offset)) << 16 | u16(offset + 2);
}

std::size_t Font::table(std::string_view tag) const {
  const std::uint16_t count = u16(4);
  for (std::uint16_t i = 0; i < count; ++i) {
    const std::size_t record = 12 + static_cast<std::size_t>(i) * 16;
    if (record + 16 > data_.size()) break;
    if (std::memcmp(data_.data() + record, tag.data(), 4) == 0) return u32(record + 8);
  }
  throw Error("font: missing table '" + std::string(tag) + "'");
}

std::uint16_t Font::glyph_index(char32_t codepoint) const {
  if (codepoint > 0xffff) return 0;
  const std::uint16_t segments = u16(cmap4_ + 6) / 2;
  const std::size_t ends = cmap4_ + 14;
  const std::size_t starts = ends + segments * 2 + 2;
  const std::size_t deltas = starts + segments * 2;
  const std::size_t range_offsets = deltas + segments * 2;
  for (std::uint16_t i = 0; i < segments; ++i) {
    if (u16(ends + i * 2) < codepoint) continue;
    const std::uint16_t start = u16(starts + i * 2);
    if (start > codepoint) return 0;
    const std::uint16_t delta = u16(deltas + i * 2);
    const std::uint16_t range_offset = u16(range_offsets + i * 2);
    if (range_offset == 0) return static_cast<std::uint16_t>(codepoint + delta);
    const std::uint16_t glyph = u16(range_offsets + i * 2 + range_offset + 2 * (codepoint - start));
    return glyph == 0 ? 0 : static_cast<std::uint16_t>(glyph + delta);
  }
  return 0;
}

int Font::advance_width(std::uint16_t glyph) const {
  const std::uint16_t index = std::min<std::uint16_t>(glyph, static_cast<std::uint16_t>(hmetric_count_ - 1));
  return u16(hmtx_ + static_cast<std::size_t>(index) * 4);
}

std::vector<Contour> Font::outline(std::uint16_t glyph) const {
  std::vector<Contour> out;
  const double identity[6] = {1, 0, 0, 1, 0, 0};
  append_outline(glyph, identity, out, 0);
  return out;
}

void Font::append_outline(std::uint16_t glyph, const double m[6], std::vector<Contour>& out, int depth) const {
  if (glyph >= glyph_count_ || depth > kMaxCompositeDepth) return;
  const std::size_t begin = long_loca_ ? u32(loca_ + glyph * 4u) : u16(loca_ + glyph * 2u) * 2u;
  const std::size_t end = long_loca_ ? u32(loca_ + glyph * 4u + 4) : u16(loca_ + glyph * 2u + 2) * 2u;
  if (end <= begin) return;  // empty glyph (space)
  const std::size_t g = glyf_ + begin;
  const std::int16_t contour_count = i16(g);

  auto transform = [&](double x, double y) { return Point{m[0] * x + m[2] * y + m[4], m[1] * x + m[3] * y + m[5]}; };

  if (contour_count < 0) {
    std::size_t p = g + 10;
    std::uint16_t flags = 0;
    do {
      flags = u16(p);
      const std::uint16_t component = u16(p + 2);
      p += 4;
      double dx = 0, dy = 0;
      if (flags & 0x0001) {
        dx = i16(p);
        dy = i16(p + 2);
        p += 4;
      } else {
        dx = static_cast<std::int8_t>(data_.at(p));
        dy = static_cast<std::int8_t>(data_.at(p + 1));
        p += 2;
      }
      if (!(flags & 0x0002)) dx = dy = 0;  // point matching is not supported
      double a = 1, b = 0, c = 0, d = 1;
      if (flags & 0x0008) {
        a = d = i16(p) / 16384.0;
        p += 2;
      } else if (flags & 0x0040) {
        a = i16(p) / 16384.0;
        d = i16(p + 2) / 16384.0;
        p += 4;
      } else if (flags & 0x0080) {
        a = i16(p) / 16384.0;
        b = i16(p + 2) / 16384.0;
        c = i16(p + 4) / 16384.0;
        d = i16(p + 6) / 16384.0;
        p += 8;
      }
      const double local[6] = {a, b, c, d, dx, dy};
      const double combined[6] = {m[0] * local[0] + m[2] * local[1],
                                  m[1] * local[0] + m[3] * local[1],
                                  m[0] * local[2] + m[2] * local[3],
                                  m[1] * local[2] + m[3] * local[3],
                                  m[0] * local[4] + m[2] * local[5] + m[4],
                                  m[1] * local[4] + m[3] * local[5] + m[5]};
      append_outline(component, combined, out, depth + 1);
    } while (flags & 0x0020);
    return;
  }

  std::vector<std::uint16_t> end_points(static_cast<std::size_t>(contour_count));
  for (std::size_t i = 0; i < end_points.size(); ++i) end_points[i] = u16(g + 10 + i * 2);
  if (end_points.empty()) return;
  const std::size_t point_count = static_cast<std::size_t>(end_points.back()) + 1;
  std::size_t p = g + 10 + end_points.size() * 2;
  p += 2 + u16(p);  // skip instructions

  std::vector<std::uint8_t> flags;
  flags.reserve(point_count);
  while (flags.size() < point_count) {
    const std::uint8_t flag = data_.at(p++);
    flags.push_back(flag);
    if (flag & 0x08) {
      for (int repeat = data_.at(p++); repeat > 0 && flags.size() < point_count; --repeat) flags.push_back(flag);
    }
  }
  std::vector<Point> points(point_count);
  int value = 0;
  for (std::size_t i = 0; i < point_count; ++i) {
    if (flags[i] & 0x02) {
      const int delta = data_.at(p++);
      value += (flags[i] & 0x10) ? delta : -delta;
    } else if (!(flags[i] & 0x10)) {
      value += i16(p);
      p += 2;
    }
    points[i].x = value;
  }
  value = 0;
  for (std::size_t i = 0; i < point_count; ++i) {
    if (flags[i] & 0x04) {
      const int delta = data_.at(p++);
      value += (flags[i] & 0x20) ? delta : -delta;
    } else if (!(flags[i] & 0x20)) {
      value += i16(p);
      p += 2;
    }
    points[i].y = value;
  }

  std::size_t first = 0;
  for (std::uint16_t last : end_points) {
    const std::size_t n = static_cast<std::size_t>(last) + 1 - first;
    if (n < 2) {
      first = static_cast<std::size_t>(last) + 1;
      continue;
    }
    auto on = [&](std::size_t i) { return (flags[first + i % n] & 0x01) != 0; };
    auto pt = [&](std::size_t i) { return transform(points[first + i % n].x, points[first + i % n].y); };

    // Start from an on-curve point, or the midpoint of two off-curve points.
    std::size_t start = 0;
    while (start < n && !on(start)) ++start;
    Point origin = start < n ? pt(start) : midpoint(pt(0), pt(1));
    if (start == n) start = 0;

    Contour contour{origin};
    Point current = origin;
    std::optional<Point> control;
    for (std::size_t k = 1; k <= n; ++k) {
      const std::size_t i = start + k;
      const Point q = pt(i);
      if (on(i)) {
        if (control) {
          flatten_quadratic(contour, current, *control, q);
          control.reset();
        } else {
          contour.push_back(q);
        }
        current = q;
      } else if (control) {
        const Point mid = midpoint(*control, q);
        flatten_quadratic(contour, current, *control, mid);
        current = mid;
        control = q;
      } else {
        control = q;
      }
    }
    if (control) flatten_quadratic(contour, current, *control, origin);
    out.push_back(std::move(contour));
    first = static_cast<std::size_t>(last) + 1;
  }
}

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    int length = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : (c >> 3) == 0x1e ? 4 : 0;
    if (length == 0 || i + static_cast<std::size_t>(length) > text.size()) {
      out.push_back(U'�');
      ++i;
      continue;
    }
    char32_t cp = length == 1 ? c : c & (0x7f >> length);
    bool valid = true;
    for (int k = 1; k < length; ++k) {
      const auto next = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
      if ((next & 0xc0) != 0x80) valid = false;
      cp = (cp << 6) | (next & 0x3f);
    }
    out.push_back(valid ? cp : U'�');
    i += valid ? static_cast<std::size_t>(length) : 1;
  }
  return out;
}

void rasterize(std::span<const Contour> polygons, CoverageMask& mask) {
  constexpr int kSub = 8;
  struct Edge {
    double x0, y0, x1, y1;
    int winding;
  };
  std::vector<Edge> edges;
  double min_y = mask.height, max_y = 0;
  for (const auto& polygon : polygons) {
    for (std::size_t i = 0; i < polygon.size(); ++i) {
      const Point a = polygon[i];
      const Point b = polygon[(i + 1) % polygon.size()];
      if (a.y == b.y) continue;
      if (a.y < b.y) {
        edges.push_back({a.x, a.y, b.x, b.y, 1});
      } else {
        edges.push_back({b.x, b.y, a.x, a.y, -1});
      }
      min_y = std::min({min_y, a.y, b.y});
      max_y = std::max({max_y, a.y, b.y});
    }
  }
  if (edges.empty()) return;
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.y0 < b.y0; });

  const int row_begin = std::max(0, static_cast<int>(std::floor(min_y)));
  const int row_end = std::min(mask.height, static_cast<int>(std::ceil(max_y)) + 1);
  std::vector<std::uint16_t> counts(static_cast<std::size_t>(mask.width));
  std::vector<std::pair<double, int>> crossings;
  for (int row = row_begin; row < row_end; ++row) {
    std::fill(counts.begin(), counts.end(), 0);
    bool any = false;
    for (int s = 0; s < kSub; ++s) {
      const double y = row + (s + 0.5) / kSub;
      crossings.clear();
      for (const auto& e : edges) {
        if (e.y0 > y) break;
        if (y >= e.y1) continue;
        const double t = (y - e.y0) / (e.y1 - e.y0);
        crossings.emplace_back(e.x0 + t * (e.x1 - e.x0), e.winding);
      }
      if (crossings.empty()) continue;
      std::sort(crossings.begin(), crossings.end());
      int winding = 0;
      for (std::size_t i = 0; i + 1 < crossings.size(); ++i) {
        winding += crossings[i].second;
        if (winding == 0) continue;
        // Horizontal samples sit at (m + 0.5) / kSub.
        const long first = std::max(0L, static_cast<long>(std::ceil(crossings[i].first * kSub - 0.5)));
        const long last = std::min(static_cast<long>(mask.width) * kSub,
                                   static_cast<long>(std::ceil(crossings[i + 1].first * kSub - 0.5)));
        for (long m = first; m < last; ++m) ++counts[static_cast<std::size_t>(m / kSub)];
        any = any || first < last;
      }
    }
    if (!any) continue;
    for (int x = 0; x < mask.width; ++x) {
      if (counts[static_cast<std::size_t>(x)] == 0) continue;
      const int alpha = (counts[static_cast<std::size_t>(x)] * 255 + kSub * kSub / 2) / (kSub * kSub);
      mask.at(x, row) = static_cast<std::uint8_t>(std::max<int>(mask.at(x, row), alpha));
    }
  }
}

CoverageMask dilate(const CoverageMask& mask, int radius) {
  if (radius <= 0) return mask;
  // Separate offsets per row of the disk keep this O(w * h * r).
  std::vector<int> half_width(static_cast<std::size_t>(2 * radius + 1));
  for (int dy = -radius; dy <= radius; ++dy) {
    half_width[static_cast<std::size_t>(dy + radius)] =
        static_cast<int>(std::floor(std::sqrt(static_cast<double>(radius * radius - dy * dy))));
  }
  // Horizontal running maxima for every needed half width, computed per row.
  CoverageMask out(mask.width, mask.height);
  std::vector<std::vector<std::vector<std::uint8_t>>> cache(static_cast<std::size_t>(mask.height));
  auto horizontal = [&](int y) -> const std::vector<std::vector<std::uint8_t>>& {
    auto& rows = cache[static_cast<std::size_t>(y)];
    if (!rows.empty()) return rows;
    rows.assign(static_cast<std::size_t>(radius + 1), std::vector<std::uint8_t>(static_cast<std::size_t>(mask.width)));
    for (int x = 0; x < mask.width; ++x) rows[0][static_cast<std::size_t>(x)] = mask.at(x, y);
    for (int w = 1; w <= radius; ++w) {
      for (int x = 0; x < mask.width; ++x) {
        std::uint8_t v = rows[static_cast<std::size_t>(w - 1)][static_cast<std::size_t>(x)];
        if (x - w >= 0) v = std::max(v, mask.at(x - w, y));
        if (x + w < mask.width) v = std::max(v, mask.at(x + w, y));
        rows[static_cast<std::size_t>(w)][static_cast<std::size_t>(x)] = v;
      }
    }
    return rows;
  };
  for (int y = 0; y < mask.height; ++y) {
    for (int dy = -radius; dy <= radius; ++dy) {
      const int sy = y + dy;
      if (sy < 0 || sy >= mask.height) continue;
      const auto& rows = horizontal(sy);
      const auto& source = rows[static_cast<std::size_t>(half_width[static_cast<std::size_t>(dy + radius)])];
      for (int x = 0; x < mask.width; ++x) {
        out.at(x, y) = std::max(out.at(x, y), source[static_cast<std::size_t>(x)]);
      }
    }
  }
  return out;
}

}  // namespace memeify::render
