#include "memeify/themes.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "memeify/error.hpp"
#include "memeify/random.hpp"

namespace memeify::themes {

using nlohmann::json;

bool is_known_theme(std::string_view name) {
  return std::find(kThemeNames.begin(), kThemeNames.end(), name) != kThemeNames.end();
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

namespace {

std::size_t nearest(std::span<const double> point, std::span<const Vector> centroids, double* distance = nullptr) {
  std::size_t best = 0;
  double best_distance = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(point, centroids[c]);
    if (d < best_distance) {
      best_distance = d;
      best = c;
    }
  }
  if (distance) *distance = best_distance;
  return best;
}

std::size_t count_distinct(std::span<const Vector> points) {
  std::vector<const Vector*> sorted;
  sorted.reserve(points.size());
  for (const auto& p : points) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(), [](const Vector* a, const Vector* b) { return *a < *b; });
  auto last = std::unique(sorted.begin(), sorted.end(), [](const Vector* a, const Vector* b) { return *a == *b; });
  return static_cast<std::size_t>(last - sorted.begin());
}

std::vector<Vector> seed_plus_plus(std::span<const Vector> points, std::size_t k, Rng& rng) {
  std::vector<Vector> centroids;
  centroids.push_back(points[rng.below(points.size())]);
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], centroids[0]);
  while (centroids.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    double target = rng.uniform() * total;
    std::size_t pick = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i;
      target -= d2[i];
      if (target < 0.0) break;
    }
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
    }
  }
  return centroids;
}

}  // namespace

double within_cluster_sum_of_squares(std::span<const Vector> points, std::span<const Vector> centroids,
                                     std::span<const std::size_t> assignments) {
  double sum = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) sum += squared_distance(points[i], centroids[assignments[i]]);
  return sum;
}

KMeansResult kmeans(std::span<const Vector> points, std::size_t k, std::uint64_t seed, std::size_t max_iters,
                    double tol) {
  if (points.empty()) throw Error("kmeans: no points");
  const std::size_t dimension = points.front().size();
  if (dimension == 0) throw Error("kmeans: zero-dimension vectors");
  for (const auto& p : points) {
    if (p.size() != dimension) throw Error("kmeans: inconsistent vector dimensions");
  }
  if (k == 0) throw Error("kmeans: k must be positive");
  if (const std::size_t distinct = count_distinct(points); k > distinct) {
    throw Error("kmeans: k = " + std::to_string(k) + " exceeds the " + std::to_string(distinct) +
                " distinct points");
  }

  Rng rng(seed);
  KMeansResult result;
  result.centroids = seed_plus_plus(points, k, rng);
  result.assignments.assign(points.size(), 0);

  auto assign = [&] {
    double objective = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double d = 0.0;
      result.assignments[i] = nearest(points[i], result.centroids, &d);
      objective += d;
    }
    result.objective_history.push_back(objective);
  };

  std::vector<Vector> sums(k, Vector(dimension));
  std::vector<std::size_t> counts(k);
  while (result.iterations < max_iters) {
    assign();
    for (auto& s : sums) std::fill(s.begin(), s.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& s = sums[result.assignments[i]];
      for (std::size_t d = 0; d < dimension; ++d) s[d] += points[i][d];
      ++counts[result.assignments[i]];
    }
    double max_shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (auto& v : sums[c]) v /= static_cast<double>(counts[c]);
      max_shift = std::max(max_shift, std::sqrt(squared_distance(sums[c], result.centroids[c])));
      result.centroids[c] = sums[c];
    }
    ++result.iterations;
    if (max_shift < tol) {
      result.converged = true;
      break;
    }
  }
  assign();
  return result;
}

std::vector<bool> flag_residuals(std::span<const Vector> points, const KMeansResult& clustering, double quantile) {
  if (quantile < 0.0 || quantile > 1.0) throw Error("residual quantile must lie in [0, 1]");
  std::vector<double> distances(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    distances[i] = std::sqrt(squared_distance(points[i], clustering.centroids[clustering.assignments[i]]));
  }
  std::vector<bool> residual(points.size(), false);
  if (points.empty()) return residual;
  std::vector<double> sorted = distances;
  std::sort(sorted.begin(), sorted.end());
  const double position = quantile * static_cast<double>(sorted.size() - 1);
  const auto lower = static_cast<std::size_t>(std::floor(position));
  const std::size_t upper = std::min(lower + 1, sorted.size() - 1);
  const double threshold = sorted[lower] + (position - static_cast<double>(lower)) * (sorted[upper] - sorted[lower]);
  for (std::size_t i = 0; i < points.size(); ++i) residual[i] = distances[i] > threshold;
  return residual;
}

ClassThemes assign_class_themes(const std::map<std::string, std::vector<ClusterAssignment>>& by_class,
                                std::span<const std::string> cluster_names, double purity) {
  ClassThemes out;
  std::vector<std::size_t> counts(cluster_names.size());
  for (const auto& [class_name, memes] : by_class) {
    if (memes.empty()) throw Error("class '" + class_name + "' has no memes");
    std::fill(counts.begin(), counts.end(), 0);
    for (const auto& meme : memes) {
      if (!meme.cluster) continue;
      if (*meme.cluster >= cluster_names.size()) {
        throw Error("meme '" + meme.meme_id + "' assigned to unknown cluster " + std::to_string(*meme.cluster));
      }
      ++counts[*meme.cluster];
    }
    ClassFraction fraction;
    fraction.total = memes.size();
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] > fraction.count) {
        fraction.count = counts[c];
        fraction.cluster = c;
      }
    }
    fraction.fraction = static_cast<double>(fraction.count) / static_cast<double>(fraction.total);
    out.class_to_theme[class_name] =
        (fraction.cluster && fraction.fraction > purity) ? cluster_names[*fraction.cluster] : std::string(kResidualTheme);
    out.fractions[class_name] = fraction;
  }
  return out;
}

std::map<std::string, std::size_t> theme_summary(const std::map<std::string, std::string>& class_to_theme) {
  std::map<std::string, std::size_t> summary;
  for (auto name : kThemeNames) summary[std::string(name)] = 0;
  for (const auto& [cls, theme] : class_to_theme) ++summary[theme];
  return summary;
}

namespace {

std::string trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

std::optional<std::size_t> parse_index(std::string_view text) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

}  // namespace

std::vector<NameRule> parse_name_config(std::istream& in) {
  std::vector<NameRule> rules;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ParseError(line_number, "expected 'Theme = value'");
    NameRule rule{trim(std::string_view(content).substr(0, eq)), trim(std::string_view(content).substr(eq + 1))};
    if (rule.theme.empty() || rule.value.empty()) throw ParseError(line_number, "empty theme or value");
    if (!is_known_theme(rule.theme)) throw ParseError(line_number, "unknown theme '" + rule.theme + "'");
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<NameRule> load_name_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path);
  return parse_name_config(in);
}

std::vector<std::string> resolve_cluster_names(
    std::span<const NameRule> rules, std::size_t k,
    const std::map<std::string, std::vector<ClusterAssignment>>& by_class) {
  if (rules.size() != k) {
    throw Error("names config has " + std::to_string(rules.size()) + " entries for " + std::to_string(k) + " clusters");
  }
  std::vector<std::string> names(k);
  for (const auto& rule : rules) {
    std::size_t cluster = 0;
    if (auto index = parse_index(rule.value)) {
      cluster = *index;
      if (cluster >= k) throw Error("theme '" + rule.theme + "' names cluster " + rule.value + " but k = " + std::to_string(k));
    } else {
      std::vector<std::size_t> votes(k, 0);
      std::string list = rule.value;
      std::replace(list.begin(), list.end(), ',', ' ');
      std::istringstream anchors(list);
      std::string anchor;
      while (anchors >> anchor) {
        auto it = by_class.find(anchor);
        if (it == by_class.end()) throw Error("theme '" + rule.theme + "' anchors unknown class '" + anchor + "'");
        for (const auto& meme : it->second) {
          if (meme.cluster) ++votes[*meme.cluster];
        }
      }
      cluster = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
    if (!names[cluster].empty()) {
      throw Error("cluster " + std::to_string(cluster) + " named twice ('" + names[cluster] + "', '" + rule.theme + "')");
    }
    names[cluster] = rule.theme;
  }
  return names;
}

void ThemeModel::validate() const {
  if (k == 0 || centroids.size() != k || theme_names.size() != k) {
    throw Error("theme model: k, centroids and theme names disagree");
  }
  std::set<std::string> seen;
  for (const auto& name : theme_names) {
    if (!is_known_theme(name)) throw Error("theme model: unknown theme name '" + name + "'");
    if (!seen.insert(name).second) throw Error("theme model: duplicate theme name '" + name + "'");
  }
  if (residual_theme != kResidualTheme) throw Error("theme model: residual theme must be Normie");
  for (const auto& [cls, theme] : class_to_theme) {
    if (theme != residual_theme && std::find(theme_names.begin(), theme_names.end(), theme) == theme_names.end()) {
      throw Error("theme model: class '" + cls + "' has unknown theme '" + theme + "'");
    }
    auto fraction = assignment_fractions.find(cls);
    if (fraction == assignment_fractions.end()) throw Error("theme model: no fraction for class '" + cls + "'");
    if (theme != residual_theme && !(fraction->second.fraction > purity)) {
      throw Error("theme model: class '" + cls + "' is labelled " + theme + " below the purity threshold");
    }
  }
  if (assignment_fractions.size() != class_to_theme.size()) throw Error("theme model: fractions and classes disagree");
}

std::map<std::string, std::vector<std::string>> ThemeModel::classes_by_theme() const {
  std::map<std::string, std::vector<std::string>> grouped;
  for (const auto& [cls, theme] : class_to_theme) grouped[theme].push_back(cls);
  return grouped;
}

json ThemeModel::to_json() const {
  json fractions = json::object();
  for (const auto& [cls, f] : assignment_fractions) {
    fractions[cls] = {{"cluster", f.cluster ? json(*f.cluster) : json(nullptr)},
                      {"fraction", f.fraction},
                      {"count", f.count},
                      {"total", f.total}};
  }
  return {{"format", "memeify-themes"},
          {"version", 1},
          {"k", k},
          {"centroids", centroids},
          {"theme_names", theme_names},
          {"residual_theme", residual_theme},
          {"purity", purity},
          {"residual_quantile", residual_quantile ? json(*residual_quantile) : json(nullptr)},
          {"class_to_theme", class_to_theme},
          {"assignment_fractions", fractions}};
}

ThemeModel ThemeModel::from_json(const json& j) {
  try {
    if (j.at("format") != "memeify-themes" || j.at("version") != 1) throw Error("not a version 1 theme model");
    ThemeModel model;
    model.k = j.at("k").get<std::size_t>();
    model.centroids = j.at("centroids").get<std::vector<Vector>>();
    model.theme_names = j.at("theme_names").get<std::vector<std::string>>();
    model.residual_theme = j.at("residual_theme").get<std::string>();
    model.purity = j.at("purity").get<double>();
    if (!j.at("residual_quantile").is_null()) model.residual_quantile = j.at("residual_quantile").get<double>();
    model.class_to_theme = j.at("class_to_theme").get<std::map<std::string, std::string>>();
    for (const auto& [cls, f] : j.at("assignment_fractions").items()) {
      ClassFraction fraction;
      if (!f.at("cluster").is_null()) fraction.cluster = f.at("cluster").get<std::size_t>();
      fraction.fraction = f.at("fraction").get<double>();
      fraction.count = f.at("count").get<std::size_t>();
      fraction.total = f.at("total").get<std::size_t>();
      model.assignment_fractions[cls] = fraction;
    }
    model.validate();
    return model;
  } catch (const json::exception& e) {
    throw Error(std::string("theme model: ") + e.what());
  }
}

ThemeModel load_theme_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("theme model " + path + ": " + e.what());
  }
  return ThemeModel::from_json(j);
}

void save_theme_model(const ThemeModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << model.to_json().dump(2) << '\n';
}

ThemeBuild build_theme_model(std::span<const LabeledVector> vectors, const ThemeBuildOptions& options,
                             std::span<const NameRule> names) {
  std::vector<Vector> points;
  points.reserve(vectors.size());
  for (const auto& v : vectors) points.push_back(v.vector);

  ThemeBuild build;
  if (options.restarts == 0) throw Error("theme build: restarts must be positive");
  build.clustering = kmeans(points, options.k, options.seed, options.max_iters, options.tol);
  for (std::size_t r = 1; r < options.restarts; ++r) {
    auto run = kmeans(points, options.k, Rng::derive(options.seed, {r}).next_u64(), options.max_iters, options.tol);
    // Strict comparison keeps the earliest run on ties.
    if (run.objective_history.back() < build.clustering.objective_history.back()) build.clustering = std::move(run);
  }

  std::vector<bool> residual(points.size(), false);
  if (options.residual_quantile) residual = flag_residuals(points, build.clustering, *options.residual_quantile);

  std::map<std::string, std::vector<ClusterAssignment>> by_class;
  build.assignments.reserve(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    ClusterAssignment a{vectors[i].id, std::nullopt};
    if (!residual[i]) a.cluster = build.clustering.assignments[i];
    by_class[vectors[i].class_name].push_back(a);
    build.assignments.push_back(std::move(a));
  }

  // Anchors vote with raw cluster membership, residual or not.
  std::map<std::string, std::vector<ClusterAssignment>> raw_by_class;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    raw_by_class[vectors[i].class_name].push_back({vectors[i].id, build.clustering.assignments[i]});
  }

  ThemeModel& model = build.model;
  model.k = options.k;
  model.centroids = build.clustering.centroids;
  model.theme_names = resolve_cluster_names(names, options.k, raw_by_class);
  model.purity = options.purity;
  model.residual_quantile = options.residual_quantile;
  auto themes = assign_class_themes(by_class, model.theme_names, options.purity);
  model.class_to_theme = std::move(themes.class_to_theme);
  model.assignment_fractions = std::move(themes.fractions);
  model.validate();
  return build;
}

}  // namespace memeify::themes
