#include "memeify/imageindex.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "memeify/random.hpp"

namespace memeify::imageindex {

using nlohmann::json;

namespace {

struct Overlap {
  int source;
  int weight;  // in 1/grid pixel units
};

// Cell g of `grid` over `extent` pixels covers [g * extent, (g + 1) * extent)
// in units of 1/grid pixel; pixel s covers [s * grid, (s + 1) * grid).
std::vector<std::vector<Overlap>> area_weights(int extent, int grid) {
  std::vector<std::vector<Overlap>> cells(static_cast<std::size_t>(grid));
  for (int g = 0; g < grid; ++g) {
    const long lo = static_cast<long>(g) * extent;
    const long hi = lo + extent;
    for (long s = lo / grid; s * grid < hi; ++s) {
      const long overlap = std::min(hi, (s + 1) * grid) - std::max(lo, s * grid);
      if (overlap > 0) cells[static_cast<std::size_t>(g)].push_back({static_cast<int>(s), static_cast<int>(overlap)});
    }
  }
  return cells;
}

void normalize(FeatureVector& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw Error("cannot normalize a zero vector");
  for (double& x : v) x /= norm;
}

}  // namespace

FeatureVector PixelHistogramExtractor::extract(const Image& image) const {
  if (image.empty() || image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw ImageDecodeError("cannot extract features from an empty or inconsistent image");
  }
  const auto lum = [&](int x, int y) {
    const auto* p = image.at(x, y);
    if (image.channels == 1) return p[0] / 255.0;
    return (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
  };

  FeatureVector features(kDimension, 0.0);
  const auto columns = area_weights(image.width, kGrid);
  const auto rows = area_weights(image.height, kGrid);
  const double cell_area = static_cast<double>(image.width) * image.height;
  for (int gy = 0; gy < kGrid; ++gy) {
    for (int gx = 0; gx < kGrid; ++gx) {
      double sum = 0.0;
      for (const auto& row : rows[static_cast<std::size_t>(gy)]) {
        for (const auto& column : columns[static_cast<std::size_t>(gx)]) {
          sum += lum(column.source, row.source) * column.weight * row.weight;
        }
      }
      features[static_cast<std::size_t>(gy * kGrid + gx)] = sum / cell_area;
    }
  }

  std::size_t histogram[3][kBins] = {};
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const auto* p = image.at(x, y);
      for (int c = 0; c < 3; ++c) ++histogram[c][(image.channels == 1 ? p[0] : p[c]) >> 5];
    }
  }
  const double pixel_count = static_cast<double>(image.width) * image.height;
  for (int c = 0; c < 3; ++c) {
    for (int b = 0; b < kBins; ++b) {
      features[kGrid * kGrid + static_cast<std::size_t>(c * kBins + b)] = histogram[c][b] / pixel_count;
    }
  }
  normalize(features);
  return features;
}

FeatureVector extract_features(const Image& image) {
  return PixelHistogramExtractor().extract(image);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("cosine similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

FeatureVector random_unit_vector(std::size_t dimension, std::uint64_t seed, std::uint64_t stream) {
  Rng rng = Rng::derive(seed, {stream});
  FeatureVector v(dimension);
  for (double& x : v) x = rng.normal();
  normalize(v);
  return v;
}

LshIndex::LshIndex(std::vector<std::pair<std::string, FeatureVector>> entries, int bits, int tables,
                   std::uint64_t seed)
    : entries_(std::move(entries)), bits_(bits), tables_(tables), seed_(seed), dimension_(0) {
  if (entries_.empty()) throw Error("LSH index needs at least one entry");
  if (bits < 1 || bits > 64) throw Error("LSH hash bits must be in [1, 64]");
  if (tables < 1) throw Error("LSH table count must be positive");
  dimension_ = entries_.front().second.size();
  if (dimension_ == 0) throw Error("LSH index: zero-dimension vectors");
  std::set<std::string> names;
  for (const auto& [name, vector] : entries_) {
    if (!names.insert(name).second) throw Error("LSH index: duplicate class '" + name + "'");
    if (vector.size() != dimension_) throw Error("LSH index: dimension mismatch for class '" + name + "'");
  }

  hyperplanes_.resize(static_cast<std::size_t>(tables));
  for (int t = 0; t < tables; ++t) {
    for (int b = 0; b < bits; ++b) {
      hyperplanes_[static_cast<std::size_t>(t)].push_back(
          random_unit_vector(dimension_, seed, static_cast<std::uint64_t>(t) * 64 + static_cast<std::uint64_t>(b)));
    }
  }
  signatures_.assign(static_cast<std::size_t>(tables), std::vector<std::uint64_t>(entries_.size()));
  buckets_.resize(static_cast<std::size_t>(tables));
  for (std::size_t t = 0; t < hyperplanes_.size(); ++t) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto sig = signature(t, entries_[i].second);
      signatures_[t][i] = sig;
      buckets_[t][sig].push_back(i);
    }
  }
}

std::uint64_t LshIndex::signature(std::size_t table, std::span<const double> vector) const {
  if (vector.size() != dimension_) throw Error("LSH: query dimension mismatch");
  std::uint64_t sig = 0;
  const auto& planes = hyperplanes_.at(table);
  for (std::size_t b = 0; b < planes.size(); ++b) {
    double dot = 0.0;
    for (std::size_t d = 0; d < dimension_; ++d) dot += planes[b][d] * vector[d];
    if (dot >= 0.0) sig |= std::uint64_t{1} << b;
  }
  return sig;
}

std::vector<std::size_t> LshIndex::candidates(std::span<const double> query) const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < buckets_.size(); ++t) {
    auto it = buckets_[t].find(signature(t, query));
    if (it != buckets_[t].end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

// Better score wins; equal scores go to the lexicographically smaller class.
bool better(double score, const std::string& name, double best_score, const std::string* best_name) {
  if (!best_name) return true;
  if (score != best_score) return score > best_score;
  return name < *best_name;
}

}  // namespace

LookupResult LshIndex::brute_force(std::span<const double> query) const {
  if (query.size() != dimension_) throw Error("LSH: query dimension mismatch");
  const std::string* best_name = nullptr;
  double best = 0.0;
  for (const auto& [name, vector] : entries_) {
    const double s = cosine_similarity(query, vector);
    if (better(s, name, best, best_name)) {
      best = s;
      best_name = &name;
    }
  }
  return {*best_name, best, false, entries_.size()};
}

LookupResult LshIndex::lookup(std::span<const double> query, bool rerank) const {
  if (query.size() != dimension_) throw Error("LSH: query dimension mismatch");
  std::vector<std::size_t> votes(entries_.size(), 0);
  std::vector<std::size_t> found;
  for (std::size_t t = 0; t < buckets_.size(); ++t) {
    auto it = buckets_[t].find(signature(t, query));
    if (it == buckets_[t].end()) continue;
    for (std::size_t id : it->second) {
      if (votes[id]++ == 0) found.push_back(id);
    }
  }
  if (found.empty()) {
    auto result = brute_force(query);
    result.fallback = true;
    result.candidate_count = 0;
    return result;
  }
  const std::string* best_name = nullptr;
  double best = 0.0;
  double best_similarity = 0.0;
  for (std::size_t id : found) {
    const auto& [name, vector] = entries_[id];
    const double similarity = cosine_similarity(query, vector);
    const double score = rerank ? similarity : static_cast<double>(votes[id]);
    if (better(score, name, best, best_name)) {
      best = score;
      best_name = &name;
      best_similarity = similarity;
    }
  }
  return {*best_name, best_similarity, false, found.size()};
}

json LshIndex::to_json() const {
  json entries = json::array();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    json sigs = json::array();
    for (const auto& table : signatures_) sigs.push_back(table[i]);
    entries.push_back({{"class", entries_[i].first}, {"vector", entries_[i].second}, {"signatures", sigs}});
  }
  return {{"format", "memeify-lsh"}, {"version", 1},       {"seed", seed_},
          {"bits", bits_},           {"tables", tables_},  {"dimension", dimension_},
          {"entries", entries}};
}

LshIndex LshIndex::from_json(const json& j) {
  try {
    if (j.at("format") != "memeify-lsh" || j.at("version") != 1) throw Error("not a version 1 LSH index");
    std::vector<std::pair<std::string, FeatureVector>> entries;
    for (const auto& e : j.at("entries")) {
      entries.emplace_back(e.at("class").get<std::string>(), e.at("vector").get<FeatureVector>());
    }
    LshIndex index(std::move(entries), j.at("bits").get<int>(), j.at("tables").get<int>(),
                   j.at("seed").get<std::uint64_t>());
    if (index.dimension() != j.at("dimension").get<std::size_t>()) throw Error("LSH index: dimension mismatch");
    const auto& stored = j.at("entries");
    for (std::size_t i = 0; i < index.size(); ++i) {
      const auto sigs = stored[i].at("signatures").get<std::vector<std::uint64_t>>();
      if (sigs.size() != static_cast<std::size_t>(index.tables())) throw Error("LSH index: signature count mismatch");
      for (std::size_t t = 0; t < sigs.size(); ++t) {
        if (sigs[t] != index.signatures()[t][i]) {
          throw Error("LSH index: stored signature for '" + index.entries()[i].first +
                      "' does not match the seeded hyperplanes");
        }
      }
    }
    return index;
  } catch (const json::exception& e) {
    throw Error(std::string("LSH index: ") + e.what());
  }
}

LshIndex LshIndex::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("LSH index " + path + ": " + e.what());
  }
  return from_json(j);
}

void LshIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << to_json().dump() << '\n';
}

LshIndex build_index(const std::map<std::string, Image>& class_images, int bits, int tables, std::uint64_t seed,
                     const FeatureExtractor& extractor) {
  std::vector<std::pair<std::string, FeatureVector>> entries;
  for (const auto& [name, image] : class_images) {
    try {
      entries.emplace_back(name, extractor.extract(image));
    } catch (const std::exception& e) {
      throw Error("feature extraction failed for class '" + name + "': " + e.what());
    }
  }
  return LshIndex(std::move(entries), bits, tables, seed);
}

double hyperplane_disagreement(std::span<const double> a, std::span<const double> b, std::size_t trials,
                               std::uint64_t seed) {
  if (a.size() != b.size()) throw Error("hyperplane disagreement: dimension mismatch");
  if (trials == 0) throw Error("hyperplane disagreement: no trials");
  std::size_t disagreements = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto plane = random_unit_vector(a.size(), seed, t);
    double da = 0.0, db = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
      da += plane[d] * a[d];
      db += plane[d] * b[d];
    }
    if ((da >= 0.0) != (db >= 0.0)) ++disagreements;
  }
  return static_cast<double>(disagreements) / static_cast<double>(trials);
}

}  // namespace memeify::imageindex
