#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "memeify/image.hpp"
#include "memeify/imageindex.hpp"
#include "memeify/random.hpp"

using namespace memeify;
using namespace memeify::imageindex;

namespace {

const std::string kFixtures = std::string(MEMEIFY_SOURCE_DIR) + "/tests/fixtures/";

Image random_image(int w, int h, std::uint64_t seed, int channels = 3) {
  Rng rng(seed);
  Image img(w, h, channels);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// Floating-point oracle for the 16x16 luminance block: every grid cell is
// the rectangle [gx*W/16, (gx+1)*W/16) x ..., averaged over pixel overlaps.
std::vector<double> oracle_block(const Image& img) {
  std::vector<double> out(256, 0.0);
  const double cw = img.width / 16.0, ch = img.height / 16.0;
  for (int gy = 0; gy < 16; ++gy) {
    for (int gx = 0; gx < 16; ++gx) {
      const double x0 = gx * cw, x1 = x0 + cw, y0 = gy * ch, y1 = y0 + ch;
      double sum = 0;
      for (int y = static_cast<int>(std::floor(y0)); y < std::ceil(y1) && y < img.height; ++y) {
        const double oy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        for (int x = static_cast<int>(std::floor(x0)); x < std::ceil(x1) && x < img.width; ++x) {
          const double ox = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
          const auto* p = img.at(x, y);
          const double l = img.channels == 1 ? p[0] / 255.0 : (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
          sum += l * ox * oy;
        }
      }
      out[gy * 16 + gx] = sum / (cw * ch);
    }
  }
  return out;
}

FeatureVector perturbed(const FeatureVector& v, double sigma, Rng& rng) {
  FeatureVector out = v;
  double norm = 0;
  for (double& x : out) {
    x += sigma * rng.normal();
    norm += x * x;
  }
  for (double& x : out) x /= std::sqrt(norm);
  return out;
}

std::vector<std::pair<std::string, FeatureVector>> random_entries(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::vector<std::pair<std::string, FeatureVector>> entries;
  for (std::size_t i = 0; i < n; ++i) {
    entries.push_back({"class_" + std::to_string(1000 + i), random_unit_vector(dim, seed, i)});
  }
  return entries;
}

}  // namespace

TEST_CASE("features of an all-black image") {
  const Image black(37, 23, 3, 0);
  const auto f = extract_features(black);
  REQUIRE(f.size() == 280);
  for (std::size_t i = 0; i < 256; ++i) CHECK(f[i] == 0.0);
  const double third = 1.0 / std::sqrt(3.0);
  for (int c = 0; c < 3; ++c) {
    CHECK(f[256 + c * 8] == doctest::Approx(third));
    for (int b = 1; b < 8; ++b) CHECK(f[256 + c * 8 + b] == 0.0);
  }
}

TEST_CASE("feature vectors match the area-average oracle and are unit length") {
  for (auto [w, h, seed] : {std::tuple{16, 16, 1}, std::tuple{17, 9, 2}, std::tuple{100, 37, 3}, std::tuple{5, 3, 4},
                            std::tuple{257, 129, 5}}) {
    for (int channels : {1, 3}) {
      const auto img = random_image(w, h, seed, channels);
      const auto f = extract_features(img);
      const auto block = oracle_block(img);
      // Undo the normalization with the histogram part, which is exact.
      double norm2 = 0;
      for (double x : block) norm2 += x * x;
      std::vector<double> hist(24, 0.0);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          for (int c = 0; c < 3; ++c) hist[c * 8 + (img.at(x, y)[channels == 1 ? 0 : c] >> 5)] += 1.0 / (w * h);
        }
      }
      for (double x : hist) norm2 += x * x;
      const double norm = std::sqrt(norm2);
      for (int i = 0; i < 256; ++i) CHECK(f[i] == doctest::Approx(block[i] / norm).epsilon(1e-9));
      for (int i = 0; i < 24; ++i) CHECK(f[256 + i] == doctest::Approx(hist[i] / norm).epsilon(1e-9));
      double n = 0;
      for (double x : f) n += x * x;
      CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("identical images give identical vectors; upscales stay close") {
  const auto img = random_image(45, 31, 9);
  const auto copy = img;
  CHECK(extract_features(img) == extract_features(copy));
  const auto up = upscale_nearest(img, 2);
  CHECK(up.width == 90);
  CHECK(cosine_similarity(extract_features(img), extract_features(up)) > 0.99);
}

TEST_CASE("extraction rejects empty images") {
  CHECK_THROWS_AS(extract_features(Image()), ImageDecodeError);
}

TEST_CASE("PNG round trip and fixed encoding") {
  const auto img = random_image(13, 7, 4);
  const auto png = encode_png(img);
  CHECK(decode_image(png) == img);
  CHECK(encode_png(img) == png);
  const auto gray = random_image(6, 5, 8, 1);
  CHECK(decode_image(encode_png(gray)) == to_rgb(gray));
}

TEST_CASE("decoding fixtures") {
  const auto jpg = read_image(kFixtures + "gradient.jpg");
  CHECK(jpg.width == 40);
  CHECK(jpg.height == 30);
  CHECK(jpg.channels == 3);
  // Lossy, but close to the source gradient.
  CHECK(std::abs(int(jpg.at(20, 10)[0]) - 120) < 12);
  const auto la = read_image(kFixtures + "gray_alpha.png");
  CHECK(la.width == 5);
  CHECK(std::abs(int(la.at(2, 2)[0]) - 100) <= 1);  // 200 at alpha 128 over black
  const auto pal = read_image(kFixtures + "palette.png");
  CHECK(pal.width == 3);
  CHECK(pal.channels == 3);
}

TEST_CASE("garbage bytes are a decode error") {
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK_THROWS_AS(decode_image(junk), ImageDecodeError);
  auto png = encode_png(random_image(8, 8, 1));
  png.resize(png.size() / 2);
  CHECK_THROWS_AS(decode_image(png), ImageDecodeError);
  CHECK_THROWS_AS(read_image("/nonexistent.png"), MissingInputError);
}

TEST_CASE("single-class index always answers that class") {
  const LshIndex index({{"only", random_unit_vector(32, 1, 0)}}, 8, 3, 5);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto r = index.lookup(random_unit_vector(32, 2, i));
    CHECK(r.class_name == "only");
  }
}

TEST_CASE("every entry sits in exactly one bucket per table") {
  const LshIndex index(random_entries(128, 280, 3), 16, 8, 11);
  for (int t = 0; t < 8; ++t) {
    std::vector<int> seen(128, 0);
    for (const auto& [sig, ids] : index.buckets(t)) {
      for (auto id : ids) {
        ++seen[id];
        CHECK(index.signatures()[t][id] == sig);
        CHECK(sig < (1ULL << 16));
      }
    }
    for (int s : seen) CHECK(s == 1);
  }
}

TEST_CASE("signatures depend only on vector, seed, H and T") {
  const auto entries = random_entries(50, 64, 4);
  const LshIndex a(entries, 12, 4, 77);
  const LshIndex b(entries, 12, 4, 77);
  const LshIndex c(entries, 12, 4, 78);
  CHECK(a.signatures() == b.signatures());
  CHECK(a.signatures() != c.signatures());
}

TEST_CASE("self retrieval") {
  const LshIndex index(random_entries(200, 280, 5), 16, 8, 1);
  for (const auto& [cls, v] : index.entries()) {
    const auto r = index.lookup(v);
    CHECK(r.class_name == cls);
    CHECK(r.similarity >= 1.0 - 1e-6);
    CHECK_FALSE(r.fallback);
  }
}

TEST_CASE("recall against brute force on noisy queries") {
  const LshIndex index(random_entries(1000, 280, 6), 16, 8, 2);
  Rng rng(12);
  int agree = 0, hashed = 0, hashed_agree = 0;
  for (int q = 0; q < 1000; ++q) {
    const auto query = perturbed(index.entries()[rng.below(1000)].second, 0.015, rng);
    const auto lsh = index.lookup(query);
    const auto exact = index.brute_force(query);
    agree += lsh.class_name == exact.class_name;
    if (!lsh.fallback) {
      ++hashed;
      hashed_agree += lsh.class_name == exact.class_name;
    }
  }
  CHECK(agree >= 950);
  REQUIRE(hashed > 500);
  CHECK(hashed_agree >= 0.95 * hashed);
}

TEST_CASE("reranked answer is the best candidate") {
  const LshIndex index(random_entries(300, 40, 7), 6, 4, 3);
  for (int q = 0; q < 200; ++q) {
    const auto query = random_unit_vector(40, 99, q);
    const auto r = index.lookup(query);
    const auto candidates = index.candidates(query);
    if (r.fallback) {
      CHECK(candidates.empty());
      CHECK(r.class_name == index.brute_force(query).class_name);
      continue;
    }
    CHECK(r.candidate_count == candidates.size());
    double best = -2.0;
    for (std::size_t id : candidates) best = std::max(best, cosine_similarity(query, index.entries()[id].second));
    CHECK(r.similarity == best);
  }
}

TEST_CASE("empty buckets fall back to brute force") {
  // A query opposite to the only entry disagrees on every hyperplane.
  const auto v = random_unit_vector(16, 1, 0);
  FeatureVector opposite = v;
  for (double& x : opposite) x = -x;
  const LshIndex index({{"a", v}}, 10, 2, 9);
  const auto r = index.lookup(opposite);
  CHECK(r.fallback);
  CHECK(r.class_name == "a");
  CHECK(r.similarity == doctest::Approx(-1.0));
}

TEST_CASE("ties go to the lexicographically first class") {
  const auto v = random_unit_vector(8, 3, 0);
  const LshIndex index({{"zulu", v}, {"alpha", v}, {"mike", v}}, 8, 2, 1);
  CHECK(index.lookup(v).class_name == "alpha");
  CHECK(index.lookup(v, false).class_name == "alpha");
  CHECK(index.brute_force(v).class_name == "alpha");
}

TEST_CASE("bit disagreement tracks the angle") {
  for (double theta : {0.1, 0.5, 1.0, std::numbers::pi / 2, 2.5, 3.0}) {
    FeatureVector a(10, 0.0), b(10, 0.0);
    a[0] = 1.0;
    b[0] = std::cos(theta);
    b[1] = std::sin(theta);
    const double freq = hyperplane_disagreement(a, b, 10000, 42);
    CHECK(std::abs(freq - theta / std::numbers::pi) <= 0.03);
  }
}

TEST_CASE("index serialization round trip and tamper detection") {
  const LshIndex index(random_entries(20, 30, 8), 10, 3, 4);
  const auto j = index.to_json();
  const auto back = LshIndex::from_json(j);
  CHECK(back.signatures() == index.signatures());
  CHECK(back.to_json() == j);
  auto tampered = j;
  tampered["seed"] = 5;
  CHECK_THROWS_AS(LshIndex::from_json(tampered), Error);
}

TEST_CASE("index errors") {
  CHECK_THROWS_AS(LshIndex({}, 8, 2, 1), Error);
  const auto v = random_unit_vector(8, 1, 0);
  CHECK_THROWS_AS(LshIndex({{"a", v}, {"a", v}}, 8, 2, 1), Error);
  CHECK_THROWS_AS(LshIndex({{"a", v}}, 0, 2, 1), Error);
  CHECK_THROWS_AS(LshIndex({{"a", v}}, 65, 2, 1), Error);
  CHECK_THROWS_AS(LshIndex({{"a", v}}, 8, 0, 1), Error);
  CHECK_THROWS_AS(LshIndex({{"a", v}, {"b", random_unit_vector(9, 1, 0)}}, 8, 1, 1), Error);
  const LshIndex index({{"a", v}}, 8, 2, 1);
  CHECK_THROWS_AS(index.lookup(random_unit_vector(9, 1, 1)), Error);
}

TEST_CASE("build_index over class images retrieves each image") {
  std::map<std::string, Image> images;
  for (int i = 0; i < 10; ++i) images["class_" + std::to_string(i)] = random_image(30 + i, 20 + 2 * i, 100 + i);
  const auto index = build_index(images, 16, 8, 3);
  CHECK(index.size() == 10);
  for (const auto& [cls, img] : images) CHECK(index.lookup(extract_features(img)).class_name == cls);
}
