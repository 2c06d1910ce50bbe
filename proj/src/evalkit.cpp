#include "memeify/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "memeify/error.hpp"
#include "memeify/themes.hpp"

namespace memeify::evalkit {

using nlohmann::json;

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double scaled = value * scale;
  return std::floor(scaled + 0.5 + 1e-9 * std::max(1.0, std::abs(scaled))) / scale;
}

double percent(std::uint64_t numerator, std::uint64_t denominator) {
  if (denominator == 0) throw Error("percent: zero denominator");
  // floor(10000 * n / d + 1/2) hundredths of a percent.
  const std::uint64_t hundredths = (20000 * numerator + denominator) / (2 * denominator);
  return static_cast<double>(hundredths) / 100.0;
}

Metrics metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error("metrics: all-zero confusion matrix");
  Metrics m;
  if (cm.tp + cm.fp > 0) m.precision = percent(cm.tp, cm.tp + cm.fp);
  if (cm.tp + cm.fn > 0) m.recall = percent(cm.tp, cm.tp + cm.fn);
  m.accuracy = percent(cm.tp + cm.tn, cm.total());
  // 2PR / (P + R) reduces to 2tp / (2tp + fp + fn) when P + R > 0.
  if (m.precision && m.recall && cm.tp > 0) m.f1 = percent(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
  return m;
}

double misclassification_rate(const ConfusionMatrix& cm) {
  if (cm.fp + cm.tn == 0) throw Error("misclassification rate: no generated memes (fp + tn == 0)");
  return percent(cm.fp, cm.fp + cm.tn);
}

ConfusionMatrix reconstruct_matrix(double precision, double recall, double accuracy, std::uint64_t n_pos,
                                   std::uint64_t n_neg, double tolerance) {
  if (n_pos + n_neg == 0) throw Error("reconstruct_matrix: empty study");
  double best = std::numeric_limits<double>::infinity();
  std::optional<ConfusionMatrix> best_cm;
  bool tied = false;
  for (std::uint64_t tp = 0; tp <= n_pos; ++tp) {
    for (std::uint64_t fp = 0; fp <= n_neg; ++fp) {
      if (tp + fp == 0 || n_pos == 0) continue;
      const ConfusionMatrix cm{tp, n_pos - tp, fp, n_neg - fp};
      const double p = 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp);
      const double r = 100.0 * static_cast<double>(tp) / static_cast<double>(n_pos);
      const double a = 100.0 * static_cast<double>(tp + cm.tn) / static_cast<double>(cm.total());
      const double deviation =
          std::max({std::abs(p - precision), std::abs(r - recall), std::abs(a - accuracy)});
      if (deviation < best) {
        best = deviation;
        best_cm = cm;
        tied = false;
      } else if (deviation == best) {
        tied = true;
      }
    }
  }
  if (!best_cm || best > tolerance) {
    std::ostringstream msg;
    msg << "reconstruct_matrix: no integer matrix within " << tolerance << " (best deviation " << best << ")";
    throw Error(msg.str());
  }
  if (tied) throw Error("reconstruct_matrix: several matrices fit equally well");
  return *best_cm;
}

std::optional<Condition> parse_condition(std::string_view name) {
  for (std::size_t i = 0; i < kConditionNames.size(); ++i) {
    if (kConditionNames[i] == name) return static_cast<Condition>(i);
  }
  return std::nullopt;
}

void RatingTable::add(std::string theme, Condition condition, int rating) {
  if (rating < 1 || rating > 5) throw Error("rating " + std::to_string(rating) + " outside [1, 5]");
  ratings_[std::move(theme)][static_cast<std::size_t>(condition)].push_back(rating);
}

double mean_of(std::span<const double> values, int decimals) {
  if (values.empty()) throw Error("mean of an empty set");
  double sum = 0.0;
  for (double v : values) sum += v;
  return round_half_up(sum / static_cast<double>(values.size()), decimals);
}

RatingSummary rating_summary(const RatingTable& table) {
  if (table.ratings().empty()) throw Error("rating summary: no themes");
  RatingSummary summary;
  std::array<std::vector<double>, 3> raw_means;
  for (const auto& [theme, conditions] : table.ratings()) {
    auto& row = summary.per_theme[theme];
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& ratings = conditions[c];
      if (ratings.empty()) {
        throw Error("rating summary: theme '" + theme + "' has no " + std::string(kConditionNames[c]) + " ratings");
      }
      double sum = 0.0;
      for (int r : ratings) sum += r;
      const double mean = sum / static_cast<double>(ratings.size());
      raw_means[c].push_back(mean);
      row[c] = round_half_up(mean, 2);
    }
  }
  for (std::size_t c = 0; c < 3; ++c) summary.overall[c] = mean_of(raw_means[c], 2);
  return summary;
}

ThemeRecovery theme_recovery(const ThemeRecoveryData& data) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> tallies;  // correct, total
  for (auto name : themes::kThemeNames) tallies[std::string(name)] = {0, 0};
  for (const auto& [truth, predicted] : data.pairs) {
    if (!themes::is_known_theme(truth)) throw Error("theme recovery: unknown theme '" + truth + "'");
    if (!themes::is_known_theme(predicted)) throw Error("theme recovery: unknown theme '" + predicted + "'");
    auto& [correct, total] = tallies[truth];
    ++total;
    if (truth == predicted) ++correct;
  }
  ThemeRecovery out;
  std::vector<double> raw;
  for (const auto& [theme, tally] : tallies) {
    if (tally.second == 0) throw Error("theme recovery: theme '" + theme + "' has no samples");
    const double accuracy = 100.0 * static_cast<double>(tally.first) / static_cast<double>(tally.second);
    raw.push_back(accuracy);
    out.per_theme[theme] = round_half_up(accuracy, 1);
  }
  out.overall = mean_of(raw, 1);
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    auto b = field.find_first_not_of(" \t\r");
    auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  return fields;
}

template <typename RowFn>
void read_csv(std::istream& in, const std::vector<std::string>& header, RowFn&& row_fn) {
  std::string line;
  std::size_t line_number = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (!seen_header) {
      if (fields != header) {
        std::string expected;
        for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
        throw ParseError(line_number, "expected header '" + expected + "'");
      }
      seen_header = true;
      continue;
    }
    if (fields.size() != header.size()) {
      throw ParseError(line_number, "expected " + std::to_string(header.size()) + " fields");
    }
    row_fn(fields, line_number);
  }
  if (!seen_header) throw ParseError(line_number, "missing CSV header");
}

}  // namespace

ThemeRecoveryData read_recovery_csv(std::istream& in) {
  ThemeRecoveryData data;
  read_csv(in, {"true_theme", "predicted_theme"}, [&](const std::vector<std::string>& f, std::size_t) {
    data.pairs.emplace_back(f[0], f[1]);
  });
  return data;
}

RatingTable read_ratings_csv(std::istream& in) {
  RatingTable table;
  read_csv(in, {"theme", "condition", "rating"}, [&](const std::vector<std::string>& f, std::size_t line) {
    auto condition = parse_condition(f[1]);
    if (!condition) throw ParseError(line, "unknown condition '" + f[1] + "'");
    int rating = 0;
    try {
      std::size_t used = 0;
      rating = std::stoi(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument(f[2]);
    } catch (const std::exception&) {
      throw ParseError(line, "rating '" + f[2] + "' is not an integer");
    }
    try {
      table.add(f[0], *condition, rating);
    } catch (const Error& e) {
      throw ParseError(line, e.what());
    }
  });
  return table;
}

namespace {
json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
}  // namespace

json to_json(const Metrics& m) {
  return {{"precision", optional_json(m.precision)},
          {"recall", optional_json(m.recall)},
          {"accuracy", optional_json(m.accuracy)},
          {"f1", optional_json(m.f1)}};
}

json to_json(const ConfusionMatrix& cm) {
  return {{"tp", cm.tp}, {"fn", cm.fn}, {"fp", cm.fp}, {"tn", cm.tn}};
}

json to_json(const RatingSummary& s) {
  json per_theme = json::object();
  for (const auto& [theme, row] : s.per_theme) {
    per_theme[theme] = {{"original", row[0]}, {"ours", row[1]}, {"baseline", row[2]}};
  }
  return {{"per_theme", per_theme},
          {"overall", {{"original", s.overall[0]}, {"ours", s.overall[1]}, {"baseline", s.overall[2]}}}};
}

json to_json(const ThemeRecovery& r) {
  return {{"per_theme", r.per_theme}, {"overall", r.overall}};
}

}  // namespace memeify::evalkit
