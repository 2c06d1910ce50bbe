#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "memeify/corpus.hpp"
#include "memeify/error.hpp"

namespace memeify::captiongen {

using TokenId = std::uint32_t;

inline constexpr std::string_view kSepToken = "<sep>";
inline constexpr std::string_view kEndToken = "<end>";
inline constexpr std::string_view kUnkToken = "<unk>";

/// "<class:NAME>", the prefix that conditions a sequence on its class.
std::string class_token(std::string_view class_name);

/// Anything of the form "<...>" is reserved for control tokens.
bool is_control_token(std::string_view token);

/// Caption text to model tokens: lowercased, split on whitespace, with
/// control-looking tokens removed so they can never be learned or emitted.
std::vector<std::string> caption_tokens(std::string_view text);

/// Emission vocabulary. Ids 0..2 are <end>, <sep>, <unk>; words follow in
/// lexicographic order.
class Vocabulary {
public:
  static constexpr TokenId kEnd = 0;
  static constexpr TokenId kSep = 1;
  static constexpr TokenId kUnk = 2;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // kUnk when absent
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

private:
  std::vector<std::string> tokens_;
};

/// Tokens that follow the class prefix: top words, <sep>, bottom words, <end>.
struct TrainingSequence {
  std::size_t class_index = 0;
  std::vector<TokenId> tokens;
};

/// Backend contract: anything that can produce a next-token distribution
/// for a class given the tokens emitted so far, and serialize itself.
class LanguageBackend {
public:
  virtual ~LanguageBackend() = default;

  virtual std::string kind() const = 0;

  /// Writes P(next | class, history) for every vocabulary id into `out`
  /// (out.size() == vocabulary size).
  virtual void next_distribution(std::size_t class_index, std::span<const TokenId> history,
                                 std::span<double> out) const = 0;

  virtual nlohmann::json to_json() const = 0;
};

/// Interpolated n-gram backend with additive smoothing. Every count is
/// keyed by class, so the class prefix stays in the conditioning context
/// at every position. With smoothing k and vocabulary size V:
///
///   P0(w | c)    = (C_c(w) + k) / (N_c + kV)
///   Pj(w | c, h) = (C_c(h, w) + kV * Pj-1(w | c, h')) / (C_c(h) + kV)
///
/// where h' drops the oldest token of h, and an unseen context falls
/// through to the lower order. k = 0 gives maximum likelihood with backoff.
class NGramBackend final : public LanguageBackend {
public:
  NGramBackend(std::size_t order, double smoothing, std::size_t vocabulary_size, std::size_t class_count);

  void fit(std::span<const TrainingSequence> sequences);

  std::size_t order() const noexcept { return order_; }
  double smoothing() const noexcept { return smoothing_; }

  std::string kind() const override { return "ngram"; }
  void next_distribution(std::size_t class_index, std::span<const TokenId> history,
                         std::span<double> out) const override;
  nlohmann::json to_json() const override;

  static std::unique_ptr<NGramBackend> from_json(const nlohmann::json& j, std::size_t vocabulary_size,
                                                 std::size_t class_count);

private:
  struct Followers {
    std::uint64_t total = 0;
    std::map<TokenId, std::uint64_t> next;
  };
  using Context = std::vector<TokenId>;
  struct ClassCounts {
    std::vector<std::uint64_t> unigram;
    std::uint64_t unigram_total = 0;
    std::vector<std::map<Context, Followers>> contexts;  // index j-1 holds contexts of length j
  };

  TokenId start_marker() const noexcept { return static_cast<TokenId>(vocabulary_size_); }

  std::size_t order_;
  double smoothing_;
  std::size_t vocabulary_size_;
  std::vector<ClassCounts> classes_;
};

/// A trained class-conditioned caption model. Immutable; share it through
/// std::shared_ptr<const ClassConditionedLM>.
class ClassConditionedLM {
public:
  ClassConditionedLM(Vocabulary vocabulary, std::vector<std::string> classes,
                     std::unique_ptr<const LanguageBackend> backend);

  const Vocabulary& vocabulary() const noexcept { return vocabulary_; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }
  const LanguageBackend& backend() const noexcept { return *backend_; }
  std::optional<std::size_t> class_index(std::string_view class_name) const;
  bool knows(std::string_view class_name) const { return class_index(class_name).has_value(); }

  /// Deterministic JSON text; identical models serialize to identical bytes.
  const std::string& serialized() const noexcept { return serialized_; }
  /// FNV-1a of the serialization, 16 hex digits.
  const std::string& id() const noexcept { return id_; }

  static ClassConditionedLM deserialize(std::string_view text);
  static ClassConditionedLM load(const std::string& path);
  void save(const std::string& path) const;

private:
  Vocabulary vocabulary_;
  std::vector<std::string> classes_;
  std::unique_ptr<const LanguageBackend> backend_;
  std::string serialized_;
  std::string id_;
};

class UnknownClassError : public Error {
public:
  explicit UnknownClassError(std::string_view class_name)
      : Error("unknown class '" + std::string(class_name) + "'"), class_name_(class_name) {}
  const std::string& class_name() const noexcept { return class_name_; }

private:
  std::string class_name_;
};

inline constexpr double kDefaultSmoothing = 0.001;

/// Throws on an empty corpus or order < 2.
ClassConditionedLM train_lm(std::span<const corpus::MemeRecord> records, std::size_t order = 3,
                            double smoothing = kDefaultSmoothing);

struct GeneratedCaption {
  std::string class_name;
  std::string top;
  std::string bottom;
  std::uint64_t seed = 0;
  std::string model_id;

  /// Digest of (top, bottom); equal captions share a digest.
  std::string digest() const;

  friend bool operator==(const GeneratedCaption&, const GeneratedCaption&) = default;
};

struct GenerateOptions {
  double temperature = 1.0;
  std::size_t max_tokens = 32;
  std::size_t max_attempts = 16;
};

/// Samples a two-part caption for `class_name`, starting from its class
/// prefix. Next-token probabilities are raised to 1/temperature and
/// renormalized; <unk> is never emitted and a second <sep> is masked.
/// Attempts that yield an empty top part are retried on a fresh stream
/// derived from the seed, up to `max_attempts`, then an Error is thrown.
/// Pure in (model, class, seed, options).
GeneratedCaption generate(const ClassConditionedLM& model, std::string_view class_name, std::uint64_t seed,
                          const GenerateOptions& options = {});

/// exp(-mean log P) over every token after the class prefix (words, <sep>,
/// <end>). Words outside the vocabulary are scored as <unk>. Returns
/// +infinity if any token has zero probability.
double perplexity(const ClassConditionedLM& model, std::span<const corpus::MemeRecord> heldout);

/// The model's token sequence for a record (without the class prefix).
std::vector<TokenId> encode(const Vocabulary& vocabulary, const corpus::MemeRecord& record);

}  // namespace memeify::captiongen
