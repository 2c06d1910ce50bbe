#include "memeify/embeddings.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "memeify/random.hpp"

namespace memeify::embeddings {

std::vector<std::string> tokenize(std::string_view caption) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : caption) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

EmbeddingTable::EmbeddingTable(std::size_t dimension) : dimension_(dimension) {
  if (dimension == 0) throw Error("embedding dimension must be positive");
}

bool EmbeddingTable::insert(std::string_view word, std::span<const float> values) {
  if (values.size() != dimension_) {
    throw Error("vector for '" + std::string(word) + "' has " + std::to_string(values.size()) +
                " components, expected " + std::to_string(dimension_));
  }
  std::string key(word);
  for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  auto [it, inserted] = entries_.insert_or_assign(std::move(key), std::vector<float>(values.begin(), values.end()));
  return inserted;
}

std::optional<std::span<const float>> EmbeddingTable::find(std::string_view word) const {
  auto it = entries_.find(word);
  if (it == entries_.end()) return std::nullopt;
  return std::span<const float>(it->second);
}

EmbeddingTable load_embeddings(std::istream& in, std::vector<std::string>* warnings) {
  EmbeddingTable table;
  std::string line;
  std::size_t line_number = 0;
  std::vector<float> values;
  while (std::getline(in, line)) {
    ++line_number;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    values.clear();
    std::string number;
    while (fields >> number) {
      char* end = nullptr;
      const float value = std::strtof(number.c_str(), &end);
      if (end == number.c_str() || *end != '\0') {
        throw ParseError(line_number, "non-numeric component '" + number + "'");
      }
      values.push_back(value);
    }
    if (values.empty()) throw ParseError(line_number, "word '" + word + "' has no vector");
    if (table.dimension() == 0) {
      table = EmbeddingTable(values.size());
    } else if (values.size() != table.dimension()) {
      throw ParseError(line_number, "dimension " + std::to_string(values.size()) +
                                        " does not match " + std::to_string(table.dimension()));
    }
    if (!table.insert(word, values) && warnings) {
      warnings->push_back("line " + std::to_string(line_number) + ": duplicate word '" + word +
                          "', keeping the last vector");
    }
  }
  if (table.empty()) throw Error("embedding table is empty");
  return table;
}

EmbeddingTable load_embeddings(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path);
  return load_embeddings(in, warnings);
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  std::ostringstream line;
  line.precision(9);
  for (const auto& [word, values] : table.entries()) {
    line.str({});
    line << word;
    for (float v : values) line << ' ' << v;
    out << line.str() << '\n';
  }
}

Vector caption_vector(std::string_view caption, const EmbeddingTable& table) {
  if (table.empty()) throw Error("embedding table is empty");
  Vector sum(table.dimension(), 0.0);
  std::size_t found = 0;
  for (const auto& token : tokenize(caption)) {
    auto vector = table.find(token);
    if (!vector) continue;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += (*vector)[i];
    ++found;
  }
  if (found == 0) throw UnembeddableCaption(caption);
  for (auto& v : sum) v /= static_cast<double>(found);
  return sum;
}

EmbeddingTable make_demo_table(std::span<const std::string> vocabulary, std::size_t dimension,
                               std::uint64_t seed) {
  EmbeddingTable table(dimension);
  std::vector<float> values(dimension);
  for (const auto& word : vocabulary) {
    Rng rng = Rng::derive(seed, {fnv1a64(word)});
    double norm = 0.0;
    std::vector<double> draw(dimension);
    for (auto& v : draw) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < dimension; ++i) values[i] = static_cast<float>(draw[i] / norm);
    table.insert(word, values);
  }
  return table;
}

std::vector<CaptionVector> embed_corpus(std::span<const corpus::MemeRecord> records, const EmbeddingTable& table,
                                        std::vector<std::string>* skipped) {
  std::vector<CaptionVector> out;
  out.reserve(records.size());
  for (const auto& record : records) {
    try {
      out.push_back({record.id, record.class_name, caption_vector(record.full_caption(), table)});
    } catch (const UnembeddableCaption&) {
      if (skipped) skipped->push_back(record.id);
    }
  }
  return out;
}

void write_vectors(std::ostream& out, std::span<const CaptionVector> vectors) {
  for (const auto& v : vectors) {
    out << nlohmann::json{{"id", v.id}, {"class", v.class_name}, {"vector", v.vector}}.dump() << '\n';
  }
}

std::vector<CaptionVector> read_vectors(std::istream& in) {
  std::vector<CaptionVector> out;
  std::string line;
  std::size_t line_number = 0;
  std::size_t dimension = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    CaptionVector v;
    try {
      const auto j = nlohmann::json::parse(line);
      v.id = j.at("id").get<std::string>();
      v.class_name = j.at("class").get<std::string>();
      v.vector = j.at("vector").get<Vector>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_number, e.what());
    }
    if (v.vector.empty()) throw ParseError(line_number, "empty vector");
    if (dimension == 0) dimension = v.vector.size();
    if (v.vector.size() != dimension) {
      throw ParseError(line_number, "expected " + std::to_string(dimension) + " components, found " +
                                        std::to_string(v.vector.size()));
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<CaptionVector> read_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path);
  return read_vectors(in);
}

}  // namespace memeify::embeddings
