#include "memeify/captiongen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "memeify/random.hpp"

namespace memeify::captiongen {

using nlohmann::json;

std::string class_token(std::string_view class_name) {
  return "<class:" + std::string(class_name) + ">";
}

bool is_control_token(std::string_view token) {
  return token.size() >= 2 && token.front() == '<' && token.back() == '>';
}

std::vector<std::string> caption_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && !is_control_token(current)) tokens.push_back(current);
    current.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary() : tokens_{std::string(kEndToken), std::string(kSepToken), std::string(kUnkToken)} {}

Vocabulary::Vocabulary(std::vector<std::string> words) : Vocabulary() {
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  for (auto& w : words) {
    if (is_control_token(w)) throw Error("vocabulary word '" + w + "' looks like a control token");
    tokens_.push_back(std::move(w));
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  if (token == kEndToken) return kEnd;
  if (token == kSepToken) return kSep;
  auto it = std::lower_bound(tokens_.begin() + 3, tokens_.end(), token,
                             [](const std::string& a, std::string_view b) { return a < b; });
  if (it == tokens_.end() || *it != token) return kUnk;
  return static_cast<TokenId>(it - tokens_.begin());
}

// ---------------------------------------------------------------------------
// NGramBackend

NGramBackend::NGramBackend(std::size_t order, double smoothing, std::size_t vocabulary_size,
                           std::size_t class_count)
    : order_(order), smoothing_(smoothing), vocabulary_size_(vocabulary_size), classes_(class_count) {
  if (order < 2) throw Error("n-gram order must be at least 2");
  if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) throw Error("smoothing must be a finite value >= 0");
  for (auto& counts : classes_) {
    counts.unigram.assign(vocabulary_size, 0);
    counts.contexts.resize(order - 1);
  }
}

void NGramBackend::fit(std::span<const TrainingSequence> sequences) {
  const std::size_t history_length = order_ - 1;
  std::vector<TokenId> padded;
  for (const auto& sequence : sequences) {
    auto& counts = classes_.at(sequence.class_index);
    padded.assign(history_length, start_marker());
    for (TokenId token : sequence.tokens) {
      ++counts.unigram.at(token);
      ++counts.unigram_total;
      for (std::size_t j = 1; j <= history_length; ++j) {
        Context context(padded.end() - static_cast<std::ptrdiff_t>(j), padded.end());
        auto& followers = counts.contexts[j - 1][context];
        ++followers.total;
        ++followers.next[token];
      }
      padded.push_back(token);
    }
  }
}

void NGramBackend::next_distribution(std::size_t class_index, std::span<const TokenId> history,
                                     std::span<double> out) const {
  const auto& counts = classes_.at(class_index);
  const double V = static_cast<double>(vocabulary_size_);
  const double mass = smoothing_ * V;

  const double denominator = static_cast<double>(counts.unigram_total) + mass;
  for (std::size_t w = 0; w < vocabulary_size_; ++w) {
    out[w] = denominator > 0.0 ? (static_cast<double>(counts.unigram[w]) + smoothing_) / denominator : 1.0 / V;
  }

  const std::size_t history_length = order_ - 1;
  Context context;
  for (std::size_t j = 1; j <= history_length; ++j) {
    // Last j tokens of the start-padded history.
    context.clear();
    for (std::size_t i = 0; i < j; ++i) {
      const std::size_t from_end = j - i;
      context.push_back(from_end <= history.size() ? history[history.size() - from_end] : start_marker());
    }
    auto it = counts.contexts[j - 1].find(context);
    if (it == counts.contexts[j - 1].end()) continue;
    const auto& followers = it->second;
    const double norm = static_cast<double>(followers.total) + mass;
    for (std::size_t w = 0; w < vocabulary_size_; ++w) out[w] = mass * out[w] / norm;
    for (const auto& [w, c] : followers.next) out[w] += static_cast<double>(c) / norm;
  }
}

json NGramBackend::to_json() const {
  json classes = json::array();
  for (const auto& counts : classes_) {
    json unigram = json::array();
    for (std::size_t w = 0; w < counts.unigram.size(); ++w) {
      if (counts.unigram[w] > 0) unigram.push_back({w, counts.unigram[w]});
    }
    json contexts = json::array();
    for (const auto& by_length : counts.contexts) {
      for (const auto& [context, followers] : by_length) {
        json next = json::array();
        for (const auto& [w, c] : followers.next) next.push_back({w, c});
        contexts.push_back({context, next});
      }
    }
    classes.push_back({{"unigram", unigram}, {"contexts", contexts}});
  }
  return {{"order", order_}, {"smoothing", smoothing_}, {"classes", classes}};
}

std::unique_ptr<NGramBackend> NGramBackend::from_json(const json& j, std::size_t vocabulary_size,
                                                      std::size_t class_count) {
  auto backend = std::make_unique<NGramBackend>(j.at("order").get<std::size_t>(), j.at("smoothing").get<double>(),
                                                vocabulary_size, class_count);
  const auto& classes = j.at("classes");
  if (classes.size() != class_count) throw Error("n-gram model: class table size mismatch");
  for (std::size_t c = 0; c < class_count; ++c) {
    auto& counts = backend->classes_[c];
    for (const auto& entry : classes[c].at("unigram")) {
      const auto w = entry.at(0).get<std::size_t>();
      if (w >= vocabulary_size) throw Error("n-gram model: token id out of range");
      counts.unigram[w] = entry.at(1).get<std::uint64_t>();
      counts.unigram_total += counts.unigram[w];
    }
    for (const auto& entry : classes[c].at("contexts")) {
      auto context = entry.at(0).get<Context>();
      if (context.empty() || context.size() >= backend->order_) throw Error("n-gram model: bad context length");
      for (TokenId t : context) {
        if (t > backend->start_marker()) throw Error("n-gram model: context token out of range");
      }
      auto& followers = counts.contexts[context.size() - 1][std::move(context)];
      for (const auto& next : entry.at(1)) {
        const auto w = next.at(0).get<TokenId>();
        if (w >= vocabulary_size) throw Error("n-gram model: token id out of range");
        const auto c_w = next.at(1).get<std::uint64_t>();
        followers.next[w] = c_w;
        followers.total += c_w;
      }
    }
  }
  return backend;
}

// ---------------------------------------------------------------------------
// ClassConditionedLM

namespace {

constexpr std::string_view kFormat = "memeify-lm";
constexpr int kVersion = 1;

std::unique_ptr<const LanguageBackend> backend_from_json(const json& j, std::size_t vocabulary_size,
                                                         std::size_t class_count) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "ngram") return NGramBackend::from_json(j.at("params"), vocabulary_size, class_count);
  throw Error("unsupported language model backend '" + kind + "'");
}

}  // namespace

ClassConditionedLM::ClassConditionedLM(Vocabulary vocabulary, std::vector<std::string> classes,
                                       std::unique_ptr<const LanguageBackend> backend)
    : vocabulary_(std::move(vocabulary)), classes_(std::move(classes)), backend_(std::move(backend)) {
  if (!backend_) throw Error("language model needs a backend");
  if (!std::is_sorted(classes_.begin(), classes_.end()) ||
      std::adjacent_find(classes_.begin(), classes_.end()) != classes_.end()) {
    throw Error("language model classes must be sorted and unique");
  }
  json class_tokens = json::array();
  for (const auto& c : classes_) class_tokens.push_back(class_token(c));
  const json j = {{"format", kFormat},
                  {"version", kVersion},
                  {"vocabulary", vocabulary_.tokens()},
                  {"classes", classes_},
                  {"class_tokens", class_tokens},
                  {"backend", {{"kind", backend_->kind()}, {"params", backend_->to_json()}}}};
  serialized_ = j.dump();
  char hex[17];
  id_ = std::string(to_hex(fnv1a64(serialized_), hex));
}

std::optional<std::size_t> ClassConditionedLM::class_index(std::string_view class_name) const {
  auto it = std::lower_bound(classes_.begin(), classes_.end(), class_name,
                             [](const std::string& a, std::string_view b) { return a < b; });
  if (it == classes_.end() || *it != class_name) return std::nullopt;
  return static_cast<std::size_t>(it - classes_.begin());
}

ClassConditionedLM ClassConditionedLM::deserialize(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != kFormat || j.at("version") != kVersion) throw Error("not a version 1 memeify language model");
    auto tokens = j.at("vocabulary").get<std::vector<std::string>>();
    if (tokens.size() < 3 || tokens[0] != kEndToken || tokens[1] != kSepToken || tokens[2] != kUnkToken) {
      throw Error("language model: malformed vocabulary header");
    }
    Vocabulary vocabulary(std::vector<std::string>(tokens.begin() + 3, tokens.end()));
    if (vocabulary.tokens() != tokens) throw Error("language model: vocabulary is not sorted");
    auto classes = j.at("classes").get<std::vector<std::string>>();
    auto backend = backend_from_json(j.at("backend"), vocabulary.size(), classes.size());
    return ClassConditionedLM(std::move(vocabulary), std::move(classes), std::move(backend));
  } catch (const json::exception& e) {
    throw Error(std::string("language model: ") + e.what());
  }
}

ClassConditionedLM ClassConditionedLM::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError(path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize(buffer.str());
}

void ClassConditionedLM::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << serialized_;
}

std::vector<TokenId> encode(const Vocabulary& vocabulary, const corpus::MemeRecord& record) {
  std::vector<TokenId> tokens;
  for (const auto& t : caption_tokens(record.caption_top)) tokens.push_back(vocabulary.id(t));
  tokens.push_back(Vocabulary::kSep);
  for (const auto& t : caption_tokens(record.caption_bottom)) tokens.push_back(vocabulary.id(t));
  tokens.push_back(Vocabulary::kEnd);
  return tokens;
}

ClassConditionedLM train_lm(std::span<const corpus::MemeRecord> records, std::size_t order, double smoothing) {
  if (records.empty()) throw Error("cannot train on an empty corpus");
  if (order < 2) throw Error("n-gram order must be at least 2");

  std::set<std::string> words;
  std::set<std::string> class_set;
  for (const auto& r : records) {
    class_set.insert(r.class_name);
    for (auto& t : caption_tokens(r.caption_top)) words.insert(std::move(t));
    for (auto& t : caption_tokens(r.caption_bottom)) words.insert(std::move(t));
  }
  Vocabulary vocabulary(std::vector<std::string>(words.begin(), words.end()));
  std::vector<std::string> classes(class_set.begin(), class_set.end());

  std::vector<TrainingSequence> sequences;
  sequences.reserve(records.size());
  for (const auto& r : records) {
    const auto index = static_cast<std::size_t>(
        std::lower_bound(classes.begin(), classes.end(), r.class_name) - classes.begin());
    sequences.push_back({index, encode(vocabulary, r)});
  }

  auto backend = std::make_unique<NGramBackend>(order, smoothing, vocabulary.size(), classes.size());
  backend->fit(sequences);
  return ClassConditionedLM(std::move(vocabulary), std::move(classes), std::move(backend));
}

// ---------------------------------------------------------------------------
// Sampling

std::string GeneratedCaption::digest() const {
  char hex[17];
  return std::string(to_hex(fnv1a64(top + '\x1f' + bottom), hex));
}

namespace {

std::optional<TokenId> sample_token(std::span<const double> probabilities, double temperature, Rng& rng) {
  double max_log = -std::numeric_limits<double>::infinity();
  for (double p : probabilities) {
    if (p > 0.0) max_log = std::max(max_log, std::log(p));
  }
  if (!std::isfinite(max_log)) return std::nullopt;

  std::vector<double> weights(probabilities.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] <= 0.0) continue;
    weights[i] = std::exp((std::log(probabilities[i]) - max_log) / temperature);
    total += weights[i];
  }
  double target = rng.uniform() * total;
  std::optional<TokenId> last;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last = static_cast<TokenId>(i);
    target -= weights[i];
    if (target < 0.0) break;
  }
  return last;
}

}  // namespace

GeneratedCaption generate(const ClassConditionedLM& model, std::string_view class_name, std::uint64_t seed,
                          const GenerateOptions& options) {
  const auto class_index = model.class_index(class_name);
  if (!class_index) throw UnknownClassError(class_name);
  if (!(options.temperature > 0.0)) throw Error("temperature must be positive");
  if (options.max_tokens < 1) throw Error("max_tokens must be at least 1");

  const auto& vocabulary = model.vocabulary();
  std::vector<double> distribution(vocabulary.size());
  std::vector<TokenId> history;

  for (std::size_t attempt = 0; attempt < std::max<std::size_t>(options.max_attempts, 1); ++attempt) {
    Rng rng = Rng::derive(seed, {fnv1a64(class_name), attempt});
    history.clear();
    std::string parts[2];
    int part = 0;
    for (std::size_t step = 0; step < options.max_tokens; ++step) {
      model.backend().next_distribution(*class_index, history, distribution);
      distribution[Vocabulary::kUnk] = 0.0;
      if (part == 1) distribution[Vocabulary::kSep] = 0.0;
      const auto token = sample_token(distribution, options.temperature, rng);
      if (!token || *token == Vocabulary::kEnd) break;
      history.push_back(*token);
      if (*token == Vocabulary::kSep) {
        part = 1;
        continue;
      }
      auto& text = parts[part];
      if (!text.empty()) text.push_back(' ');
      text += vocabulary.token(*token);
    }
    if (!parts[0].empty()) {
      return GeneratedCaption{std::string(class_name), std::move(parts[0]), std::move(parts[1]), seed, model.id()};
    }
  }
  throw Error("generation for class '" + std::string(class_name) + "' produced an empty top caption " +
              std::to_string(options.max_attempts) + " times");
}

double perplexity(const ClassConditionedLM& model, std::span<const corpus::MemeRecord> heldout) {
  if (heldout.empty()) throw Error("perplexity: empty held-out set");
  std::vector<double> distribution(model.vocabulary().size());
  double log_sum = 0.0;
  std::size_t scored = 0;
  for (const auto& record : heldout) {
    const auto class_index = model.class_index(record.class_name);
    if (!class_index) throw UnknownClassError(record.class_name);
    const auto tokens = encode(model.vocabulary(), record);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      model.backend().next_distribution(*class_index, std::span(tokens).first(i), distribution);
      const double p = distribution[tokens[i]];
      if (p <= 0.0) return std::numeric_limits<double>::infinity();
      log_sum += std::log(p);
      ++scored;
    }
  }
  return std::exp(-log_sum / static_cast<double>(scored));
}

}  // namespace memeify::captiongen
