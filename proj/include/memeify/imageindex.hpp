#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "memeify/image.hpp"

namespace memeify::imageindex {

/// L2-normalized feature vector.
using FeatureVector = std::vector<double>;

/// Image -> feature vector contract. Implementations must be
/// deterministic and produce unit vectors of a fixed dimension.
class FeatureExtractor {
public:
  virtual ~FeatureExtractor() = default;
  virtual std::size_t dimension() const = 0;
  virtual FeatureVector extract(const Image& image) const = 0;
};

/// Default extractor: 16x16 area-averaged luminance block (256 values in
/// [0, 1]) followed by an 8-bin histogram per RGB channel (24 values, each
/// channel summing to 1), L2-normalized as a whole.
class PixelHistogramExtractor final : public FeatureExtractor {
public:
  static constexpr int kGrid = 16;
  static constexpr int kBins = 8;
  static constexpr std::size_t kDimension = kGrid * kGrid + 3 * kBins;

  std::size_t dimension() const override { return kDimension; }
  FeatureVector extract(const Image& image) const override;
};

/// Convenience wrapper around PixelHistogramExtractor.
FeatureVector extract_features(const Image& image);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Unit vector with i.i.d. Gaussian direction.
FeatureVector random_unit_vector(std::size_t dimension, std::uint64_t seed, std::uint64_t stream);

struct LookupResult {
  std::string class_name;
  double similarity = 0.0;
  bool fallback = false;          // no bucket matched; brute force over all entries
  std::size_t candidate_count = 0;
};

/// Random-hyperplane LSH over class feature vectors: T tables, each with H
/// seeded unit hyperplanes; an entry's signature in a table is the sign
/// pattern of its projections. Immutable after construction.
class LshIndex {
public:
  static constexpr int kDefaultBits = 16;
  static constexpr int kDefaultTables = 8;

  /// Throws on an empty entry list, duplicate class names, inconsistent
  /// dimensions, H outside [1, 64] or T < 1.
  LshIndex(std::vector<std::pair<std::string, FeatureVector>> entries, int bits, int tables, std::uint64_t seed);

  int bits() const noexcept { return bits_; }
  int tables() const noexcept { return tables_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::pair<std::string, FeatureVector>>& entries() const noexcept { return entries_; }

  std::uint64_t signature(std::size_t table, std::span<const double> vector) const;
  /// signatures()[t][i] is entry i's signature in table t.
  const std::vector<std::vector<std::uint64_t>>& signatures() const noexcept { return signatures_; }
  const std::map<std::uint64_t, std::vector<std::size_t>>& buckets(std::size_t table) const {
    return buckets_.at(table);
  }

  /// Entry ids sharing a bucket with `query` in at least one table (sorted).
  std::vector<std::size_t> candidates(std::span<const double> query) const;

  /// Candidates are the union of the query's buckets. With `rerank` the
  /// best cosine among them wins; without, the candidate colliding in the
  /// most tables wins. Ties go to the lexicographically smaller class.
  /// With no candidate at all, falls back to brute force (flagged).
  LookupResult lookup(std::span<const double> query, bool rerank = true) const;

  /// Exhaustive cosine search; the reference answer for `lookup`.
  LookupResult brute_force(std::span<const double> query) const;

  nlohmann::json to_json() const;
  /// Rebuilds the hyperplanes from the stored seed and checks that the
  /// stored signatures match.
  static LshIndex from_json(const nlohmann::json& j);
  static LshIndex load(const std::string& path);
  void save(const std::string& path) const;

private:
  std::vector<std::pair<std::string, FeatureVector>> entries_;
  int bits_;
  int tables_;
  std::uint64_t seed_;
  std::size_t dimension_;
  std::vector<std::vector<FeatureVector>> hyperplanes_;  // [table][bit]
  std::vector<std::vector<std::uint64_t>> signatures_;   // [table][entry]
  std::vector<std::map<std::uint64_t, std::vector<std::size_t>>> buckets_;
};

/// Extracts features for every class image and builds the index. An
/// extraction failure names the class.
LshIndex build_index(const std::map<std::string, Image>& class_images, int bits, int tables, std::uint64_t seed,
                     const FeatureExtractor& extractor = PixelHistogramExtractor());

/// Fraction of `trials` random hyperplanes on which the signs of a and b
/// disagree. Approximates angle(a, b) / pi.
double hyperplane_disagreement(std::span<const double> a, std::span<const double> b, std::size_t trials,
                               std::uint64_t seed);

}  // namespace memeify::imageindex
