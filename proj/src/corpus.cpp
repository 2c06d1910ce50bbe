#include "memeify/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "memeify/error.hpp"
#include "memeify/random.hpp"

namespace memeify::corpus {

using nlohmann::json;

namespace {

std::string trim(std::string_view text) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto begin = std::find_if_not(text.begin(), text.end(), is_space);
  auto end = std::find_if_not(text.rbegin(), std::string_view::reverse_iterator(begin), is_space).base();
  return std::string(begin, end);
}

std::string string_field(const json& object, const char* key, std::size_t line, bool required) {
  auto it = object.find(key);
  if (it == object.end() || it->is_null()) {
    if (required) throw ParseError(line, std::string("missing field '") + key + "'");
    return {};
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw ParseError(line, std::string("field '") + key + "' must be a string");
}

}  // namespace

std::string MemeRecord::full_caption() const {
  if (caption_bottom.empty()) return caption_top;
  return caption_top + " " + caption_bottom;
}

void CorpusStats::add(const MemeRecord& record) {
  ++record_count;
  ++per_class_counts[record.class_name];
  class_count = per_class_counts.size();
}

std::string normalize_class_name(std::string_view name) {
  std::string out;
  bool pending_sep = false;
  for (unsigned char c : name) {
    if (c == ' ' || c == '-' || c == '_' || c == '\t') {
      pending_sep = !out.empty();
      continue;
    }
    if (pending_sep) {
      out.push_back('_');
      pending_sep = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

MemeRecord parse_record(std::string_view line, std::size_t line_number) {
  json object;
  try {
    object = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(line_number, std::string("malformed JSON: ") + e.what());
  }
  if (!object.is_object()) throw ParseError(line_number, "expected a JSON object");

  MemeRecord record;
  record.id = string_field(object, "id", line_number, true);
  if (record.id.empty()) throw ParseError(line_number, "empty id");
  record.class_name = normalize_class_name(string_field(object, "class", line_number, true));
  if (record.class_name.empty()) throw ParseError(line_number, "empty class");
  record.caption_top = trim(string_field(object, "caption_top", line_number, true));
  if (record.caption_top.empty()) throw ParseError(line_number, "empty caption_top");
  record.caption_bottom = trim(string_field(object, "caption_bottom", line_number, false));
  if (auto image = string_field(object, "image", line_number, false); !image.empty()) {
    record.image_ref = std::move(image);
  }
  return record;
}

std::string to_line(const MemeRecord& record) {
  json object = {
      {"id", record.id},
      {"class", record.class_name},
      {"caption_top", record.caption_top},
      {"caption_bottom", record.caption_bottom},
  };
  if (record.image_ref) object["image"] = *record.image_ref;
  return object.dump();
}

CorpusStats for_each_record(std::istream& in, const std::function<void(MemeRecord&&)>& sink) {
  CorpusStats stats;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    MemeRecord record = parse_record(line, line_number);
    stats.add(record);
    sink(std::move(record));
  }
  return stats;
}

CorpusStats for_each_record(const std::string& path,
                            const std::function<void(MemeRecord&&)>& sink) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path);
  return for_each_record(in, sink);
}

Corpus read_corpus(std::istream& in) {
  Corpus corpus;
  corpus.stats = for_each_record(in, [&](MemeRecord&& r) { corpus.records.push_back(std::move(r)); });
  return corpus;
}

Corpus read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path);
  return read_corpus(in);
}

void write_corpus(std::ostream& out, std::span<const MemeRecord> records) {
  for (const auto& record : records) out << to_line(record) << '\n';
}

Sample stratified_sample(std::span<const MemeRecord> records, std::size_t n, std::uint64_t seed,
                         bool strict) {
  if (n > records.size()) {
    throw Error("sample size " + std::to_string(n) + " exceeds corpus size " +
                std::to_string(records.size()));
  }

  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].class_name].push_back(i);

  // Largest remainder apportionment; ties go to the lexicographically first class.
  struct Quota {
    const std::string* name;
    std::size_t base;
    std::uint64_t remainder;  // numerator of the fractional part, over records.size()
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [name, indices] : by_class) {
    const std::uint64_t scaled = static_cast<std::uint64_t>(n) * indices.size();
    quotas.push_back({&name, static_cast<std::size_t>(scaled / records.size()), scaled % records.size()});
    assigned += quotas.back().base;
  }
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quotas[a].remainder > quotas[b].remainder;
  });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++quotas[order[i]].base;

  Sample sample;
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  std::uint64_t stream = 0;
  for (const auto& quota : quotas) {
    auto indices = by_class[*quota.name];
    if (quota.base == 0) {
      sample.dropped_classes.push_back(*quota.name);
      ++stream;
      continue;
    }
    Rng rng = Rng::derive(seed, {stream++});
    // Partial Fisher-Yates: the first `base` slots are a uniform draw.
    for (std::size_t i = 0; i < quota.base; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.below(indices.size() - i));
      std::swap(indices[i], indices[j]);
      chosen.push_back(indices[i]);
    }
  }

  if (strict && !sample.dropped_classes.empty()) {
    std::string names;
    for (const auto& name : sample.dropped_classes) names += (names.empty() ? "" : ", ") + name;
    throw Error("stratified sample of " + std::to_string(n) + " cannot cover " +
                std::to_string(by_class.size()) + " classes; dropped: " + names);
  }

  std::sort(chosen.begin(), chosen.end());
  sample.records.reserve(chosen.size());
  for (std::size_t index : chosen) sample.records.push_back(records[index]);
  return sample;
}

}  // namespace memeify::corpus
