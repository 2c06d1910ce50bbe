#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memeify::corpus {

/// One captioned meme. A caption has a top part and an optional bottom
/// part; there is no third segment.
struct MemeRecord {
  std::string id;
  std::string class_name;
  std::string caption_top;
  std::string caption_bottom;
  std::optional<std::string> image_ref;

  /// Both parts joined by a single space (bottom omitted when empty).
  std::string full_caption() const;

  friend bool operator==(const MemeRecord&, const MemeRecord&) = default;
};

struct CorpusStats {
  std::size_t record_count = 0;
  std::size_t class_count = 0;
  std::map<std::string, std::size_t> per_class_counts;

  void add(const MemeRecord& record);

  friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

struct Corpus {
  std::vector<MemeRecord> records;
  CorpusStats stats;
};

/// Lowercase, with runs of spaces/hyphens collapsed to one underscore
/// ("Imminent Ned" -> "imminent_ned").
std::string normalize_class_name(std::string_view name);

/// Parses one corpus line. Throws ParseError (tagged with `line_number`)
/// for malformed JSON, missing fields or an empty top caption.
MemeRecord parse_record(std::string_view line, std::size_t line_number);

/// Serializes a record back to the canonical one-object-per-line form
/// (no trailing newline).
std::string to_line(const MemeRecord& record);

/// Streams records from `in` to `sink`. Blank lines are skipped but still
/// counted for error line numbers.
CorpusStats for_each_record(std::istream& in, const std::function<void(MemeRecord&&)>& sink);

/// Streams records from the file at `path`. Throws MissingInputError when
/// the file cannot be opened.
CorpusStats for_each_record(const std::string& path,
                            const std::function<void(MemeRecord&&)>& sink);

Corpus read_corpus(const std::string& path);
Corpus read_corpus(std::istream& in);

void write_corpus(std::ostream& out, std::span<const MemeRecord> records);

struct Sample {
  std::vector<MemeRecord> records;
  /// Classes that received a zero quota (only possible when n < class count).
  std::vector<std::string> dropped_classes;
};

/// Proportional stratified sample of `n` records. Quotas use the largest
/// remainder method, so every class lands within one record of its exact
/// proportional share. Records are returned in corpus order.
///
/// Throws when n exceeds the corpus size, and when `strict` is set and
/// some class would receive no records (the message lists them).
Sample stratified_sample(std::span<const MemeRecord> records, std::size_t n, std::uint64_t seed,
                         bool strict = false);

}  // namespace memeify::corpus
