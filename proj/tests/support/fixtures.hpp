#pragma once

// Deterministic images shared by the renderer tests and the acceptance run.

#include <cstdint>
#include <string>

#include "memeify/image.hpp"

namespace fixtures {

inline const std::string kGolden = std::string(MEMEIFY_SOURCE_DIR) + "/tests/golden/fixture_render.png";

inline memeify::Image gradient(int w, int h) {
  memeify::Image img(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto* p = img.at(x, y);
      p[0] = static_cast<std::uint8_t>(40 + 150 * x / w);
      p[1] = static_cast<std::uint8_t>(60 + 120 * y / h);
      p[2] = static_cast<std::uint8_t>(90 + ((x / 16 + y / 16) % 2) * 40);
    }
  }
  return img;
}

}  // namespace fixtures
