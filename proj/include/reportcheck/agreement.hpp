#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace reportcheck {

// Error(kInvalidArgument) on unequal lengths; kDegenerateInput when shorter
// than 2 or either side has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

// Pearson over average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

enum class Preference { kFirst, kSecond, kTie };

struct PreferencePair {
  std::string task_id;
  Preference judge = Preference::kTie;
  Preference human = Preference::kTie;
};

// Share of pairs where the judge picks the human's preference. Pairs the
// human rated as a tie are dropped; a judge tie elsewhere is a miss.
// Error(kNoPairs) when nothing is left.
double pairwise_agreement(const std::vector<PreferencePair>& pairs);

Preference prefer(double first, double second);

// Every pair of items within the same task, preferences read off the scores.
std::vector<PreferencePair> preferences_from_scores(std::span<const double> judge, std::span<const double> human,
                                                    const std::vector<std::string>& task_of_item);

// values[rater][item]; nullopt is a missing cell.
struct ScoreMatrix {
  std::vector<std::string> raters;
  std::vector<std::string> items;
  std::vector<std::vector<std::optional<double>>> values;

  // Error(kInvalidArgument) when row/column sizes disagree with the labels.
  void check_shape() const;
  bool complete() const;
};

// Interval metric (squared difference) over pairable values.
// Error(kInsufficientOverlap) with fewer than 2 raters or no item rated twice.
double krippendorff_alpha(const ScoreMatrix& m);

enum class IccForm { kSingle, kAverage };  // ICC(2,1), ICC(2,k)

// Two-way random effects, absolute agreement. Error(kMissingCells) on any
// missing value; kDegenerateInput when items do not vary.
double icc(const ScoreMatrix& m, IccForm form);

enum class Pooling { kGlobal, kPerTask };

std::string_view pooling_name(Pooling p);
std::optional<Pooling> parse_pooling(std::string_view name);

struct StatsInput {
  ScoreMatrix matrix;
  std::vector<std::string> task_of_item;  // empty: one task
  std::optional<std::string> reference;   // rater the judges are compared against
};

// {"raters": [...], "items": [...], "tasks": [...], "reference": "human",
//  "values": [[...], ...]} with null for missing cells.
StatsInput stats_input_from_json(const nlohmann::json& j);

// Per-judge "Pearson r" / "Spearman rho" / "Pairwise Agr." against the
// reference, plus "Krip. alpha" / "ICC(2,1)" / "ICC(2,k)" across the judges.
// A statistic that cannot be computed is null with its reason under "notes".
// Per-task pooling averages the per-task values that are defined.
nlohmann::json compute_stats(const StatsInput& input, Pooling pooling);

}  // namespace reportcheck
