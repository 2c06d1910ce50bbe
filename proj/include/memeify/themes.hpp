#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "memeify/embeddings.hpp"

namespace memeify::themes {

using Vector = std::vector<double>;

inline constexpr std::string_view kResidualTheme = "Normie";

/// The six theme labels: five cluster themes plus the residual.
inline constexpr std::array<std::string_view, 6> kThemeNames = {
    "Normie", "Savage", "Depressing", "Unexpected", "Frustrated", "Wholesome"};

bool is_known_theme(std::string_view name);

struct KMeansResult {
  std::vector<Vector> centroids;
  std::vector<std::size_t> assignments;
  /// Within-cluster sum of squares after every assignment step, including
  /// the final one. Non-increasing.
  std::vector<double> objective_history;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Lloyd's algorithm with k-means++ seeding. Stops when the largest
/// centroid shift is below `tol` or after `max_iters` update steps, then
/// performs a last assignment pass so every point sits with its nearest
/// centroid. Ties go to the lower centroid index; an emptied cluster keeps
/// its previous centroid.
KMeansResult kmeans(std::span<const Vector> points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iters = 100, double tol = 1e-9);

double squared_distance(std::span<const double> a, std::span<const double> b);

double within_cluster_sum_of_squares(std::span<const Vector> points, std::span<const Vector> centroids,
                                     std::span<const std::size_t> assignments);

/// Marks points whose distance to their centroid exceeds the `quantile`
/// (linear interpolation) of all such distances.
std::vector<bool> flag_residuals(std::span<const Vector> points, const KMeansResult& clustering,
                                 double quantile);

/// A meme's cluster; nullopt marks a residual point.
struct ClusterAssignment {
  std::string meme_id;
  std::optional<std::size_t> cluster;
};

struct ClassFraction {
  std::optional<std::size_t> cluster;  // dominant cluster, nullopt if every meme is residual
  double fraction = 0.0;
  std::size_t count = 0;
  std::size_t total = 0;
};

struct ClassThemes {
  std::map<std::string, std::string> class_to_theme;
  std::map<std::string, ClassFraction> fractions;
};

inline constexpr double kDefaultPurity = 0.90;

/// A class takes the theme of its dominant cluster when strictly more than
/// `purity` of its memes fall in that cluster; otherwise it is "Normie".
/// `cluster_names[i]` names cluster i. Throws for a class with no memes or
/// an assignment outside [0, cluster_names.size()).
ClassThemes assign_class_themes(const std::map<std::string, std::vector<ClusterAssignment>>& by_class,
                                std::span<const std::string> cluster_names,
                                double purity = kDefaultPurity);

/// Theme -> class count. All six theme names are present (possibly zero).
std::map<std::string, std::size_t> theme_summary(const std::map<std::string, std::string>& class_to_theme);

/// One "Theme = value" line of a names config. The value is either a
/// cluster index or a list of anchor class names; the cluster holding most
/// of the anchors' memes receives the name.
struct NameRule {
  std::string theme;
  std::string value;
};

std::vector<NameRule> parse_name_config(std::istream& in);
std::vector<NameRule> load_name_config(const std::string& path);

/// Resolves the rules to one name per cluster. Every cluster must be named
/// exactly once.
std::vector<std::string> resolve_cluster_names(
    std::span<const NameRule> rules, std::size_t k,
    const std::map<std::string, std::vector<ClusterAssignment>>& by_class);

struct ThemeModel {
  std::size_t k = 0;
  std::vector<Vector> centroids;
  std::vector<std::string> theme_names;  // one per cluster
  std::string residual_theme{kResidualTheme};
  double purity = kDefaultPurity;
  std::optional<double> residual_quantile;
  std::map<std::string, std::string> class_to_theme;
  std::map<std::string, ClassFraction> assignment_fractions;

  /// Throws memeify::Error when an invariant does not hold.
  void validate() const;

  /// Classes grouped by theme; themes and classes in lexicographic order.
  std::map<std::string, std::vector<std::string>> classes_by_theme() const;

  nlohmann::json to_json() const;
  static ThemeModel from_json(const nlohmann::json& j);
};

ThemeModel load_theme_model(const std::string& path);
void save_theme_model(const ThemeModel& model, const std::string& path);

using LabeledVector = embeddings::CaptionVector;

struct ThemeBuildOptions {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double tol = 1e-9;
  /// Independent k-means++ seedings (run r uses Rng::derive(seed, {r}),
  /// run 0 uses `seed` itself); the lowest final objective wins.
  std::size_t restarts = 10;
  double purity = kDefaultPurity;
  std::optional<double> residual_quantile;  // unset: no residual flagging
};

struct ThemeBuild {
  ThemeModel model;
  std::vector<ClusterAssignment> assignments;  // parallel to the input
  KMeansResult clustering;
};

/// Clusters the vectors, names the clusters, and assigns every class a theme.
ThemeBuild build_theme_model(std::span<const LabeledVector> vectors, const ThemeBuildOptions& options,
                             std::span<const NameRule> names);

}  // namespace memeify::themes
