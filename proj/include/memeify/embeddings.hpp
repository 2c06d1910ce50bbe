#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memeify/corpus.hpp"
#include "memeify/error.hpp"

namespace memeify::embeddings {

using Vector = std::vector<double>;

/// Lowercase tokens split on every run of non-alphanumeric characters.
std::vector<std::string> tokenize(std::string_view caption);

/// Immutable word -> vector map; every vector has `dimension()` components.
class EmbeddingTable {
public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dimension);

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// Inserts or replaces. Returns false when the word was already present.
  /// The word is lowercased; the vector must match the dimension.
  bool insert(std::string_view word, std::span<const float> values);

  std::optional<std::span<const float>> find(std::string_view word) const;

  const std::map<std::string, std::vector<float>, std::less<>>& entries() const noexcept {
    return entries_;
  }

private:
  std::size_t dimension_ = 0;
  std::map<std::string, std::vector<float>, std::less<>> entries_;
};

/// Thrown by caption_vector when no token of the caption has an embedding.
class UnembeddableCaption : public Error {
public:
  explicit UnembeddableCaption(std::string_view caption)
      : Error("unembeddable caption (all tokens out of vocabulary): \"" + std::string(caption) + "\"") {}
};

/// Reads "word v1 ... vd" lines; d is taken from the first line.
/// Duplicate words: the last occurrence wins and a warning is appended to
/// `warnings` (when given). Throws ParseError on dimension mismatches and
/// Error on an empty input.
EmbeddingTable load_embeddings(std::istream& in, std::vector<std::string>* warnings = nullptr);
EmbeddingTable load_embeddings(const std::string& path, std::vector<std::string>* warnings = nullptr);

void write_embeddings(std::ostream& out, const EmbeddingTable& table);

/// Componentwise mean over the in-vocabulary tokens of `caption`.
/// Out-of-vocabulary tokens are skipped; if none remain, throws
/// UnembeddableCaption.
Vector caption_vector(std::string_view caption, const EmbeddingTable& table);

/// Table of seeded random unit vectors, one per word. Each word gets its
/// own stream so the vector of a word does not depend on the rest of the
/// vocabulary.
EmbeddingTable make_demo_table(std::span<const std::string> vocabulary, std::size_t dimension,
                               std::uint64_t seed);

/// One embedded caption: the record id, its class and the caption vector.
struct CaptionVector {
  std::string id;
  std::string class_name;
  Vector vector;
};

/// Embeds every record's full caption. Records whose caption is entirely
/// out of vocabulary are skipped and their ids appended to `skipped`.
std::vector<CaptionVector> embed_corpus(std::span<const corpus::MemeRecord> records, const EmbeddingTable& table,
                                        std::vector<std::string>* skipped = nullptr);

/// JSON lines: {"id": ..., "class": ..., "vector": [...]}.
void write_vectors(std::ostream& out, std::span<const CaptionVector> vectors);
std::vector<CaptionVector> read_vectors(std::istream& in);
std::vector<CaptionVector> read_vectors(const std::string& path);

}  // namespace memeify::embeddings
