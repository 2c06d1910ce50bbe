#pragma once

#include <array>
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

namespace memeify::evalkit {

/// Binary confusion matrix; the positive class is "original meme".
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fn = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fn + fp + tn; }
  /// Swap the roles of the two classes.
  ConfusionMatrix relabeled() const noexcept { return {tn, fp, fn, tp}; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Percentages rounded half-up to two decimals. A metric whose
/// denominator is zero is reported as nullopt rather than 0.
struct Metrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> accuracy;
  std::optional<double> f1;
};

/// Rounds half-up to `decimals` places. A relative epsilon absorbs binary
/// representation error so that 85.45 rounds to 85.5.
double round_half_up(double value, int decimals);

/// 100 * numerator / denominator rounded half-up to 2 decimals, computed
/// exactly in integers.
double percent(std::uint64_t numerator, std::uint64_t denominator);

/// Throws memeify::Error on an all-zero matrix.
Metrics metrics(const ConfusionMatrix& cm);

/// Percent of generated memes labelled original: fp / (fp + tn).
/// Throws when fp + tn == 0.
double misclassification_rate(const ConfusionMatrix& cm);

inline constexpr double kReconstructTolerance = 0.01;

/// Finds the integer matrix with tp <= n_pos, fp <= n_neg whose unrounded
/// precision, recall and accuracy deviate least (max norm) from the given
/// percentages. Throws if the best deviation exceeds `tolerance` or if two
/// matrices tie for best.
ConfusionMatrix reconstruct_matrix(double precision, double recall, double accuracy, std::uint64_t n_pos,
                                   std::uint64_t n_neg, double tolerance = kReconstructTolerance);

enum class Condition : std::size_t { Original = 0, Ours = 1, Baseline = 2 };
inline constexpr std::array<std::string_view, 3> kConditionNames = {"original", "ours", "baseline"};
std::optional<Condition> parse_condition(std::string_view name);

class RatingTable {
public:
  /// Throws unless `rating` is in [1, 5].
  void add(std::string theme, Condition condition, int rating);

  const std::map<std::string, std::array<std::vector<int>, 3>>& ratings() const noexcept { return ratings_; }

private:
  std::map<std::string, std::array<std::vector<int>, 3>> ratings_;
};

struct RatingSummary {
  /// Per theme: mean rating per condition (indexed by Condition), 2 decimals.
  std::map<std::string, std::array<double, 3>> per_theme;
  /// Mean of the per-theme means per condition, 2 decimals.
  std::array<double, 3> overall{};
};

/// Throws when a theme lacks ratings for some condition.
RatingSummary rating_summary(const RatingTable& table);

/// Unweighted mean of per-group values, rounded half-up.
double mean_of(std::span<const double> values, int decimals);

struct ThemeRecoveryData {
  std::vector<std::pair<std::string, std::string>> pairs;  // (true theme, predicted theme)
};

struct ThemeRecovery {
  std::map<std::string, double> per_theme;  // percent, 1 decimal
  double overall = 0.0;                     // unweighted mean of per-theme accuracies, 1 decimal
};

/// Every theme of the six-theme set must have at least one sample.
ThemeRecovery theme_recovery(const ThemeRecoveryData& data);

/// CSV with header `true_theme,predicted_theme`.
ThemeRecoveryData read_recovery_csv(std::istream& in);
/// CSV with header `theme,condition,rating`.
RatingTable read_ratings_csv(std::istream& in);

nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const ConfusionMatrix& cm);
nlohmann::json to_json(const RatingSummary& s);
nlohmann::json to_json(const ThemeRecovery& r);

}  // namespace memeify::evalkit
