#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reportcheck/gateway.hpp"
#include "reportcheck/metrics.hpp"

namespace reportcheck {

enum class Aspect { kCoverage, kQuality };

std::string_view aspect_name(Aspect aspect);
std::optional<Aspect> parse_aspect(std::string_view name);

struct Factor {
  std::string id;
  Aspect aspect = Aspect::kCoverage;
  std::string prompt_text;
};

struct Element {
  std::string id;
  std::string name;
  std::string description;
  std::vector<Factor> factors;
};

struct Criterion {
  std::string id;
  std::string name;
  // Metric component feeding this criterion (information dimensions only).
  std::optional<std::string> metric;
  std::vector<Element> elements;
};

// judge: scored by the LLM judge. metrics: filled from the metrics module.
enum class DimensionSource { kJudge, kMetrics };

struct Dimension {
  std::string id;
  std::string name;
  std::string short_name;  // table column label; name when empty
  DimensionSource source = DimensionSource::kJudge;
  std::vector<Criterion> criteria;
};

struct TaxonomyCounts {
  int dimensions = 0;
  int criteria = 0;
  int elements = 0;
  int factors = 0;

  bool operator==(const TaxonomyCounts&) const = default;
};

struct Taxonomy {
  std::vector<Dimension> dimensions;

  TaxonomyCounts counts() const;
  const Factor* find_factor(std::string_view id) const;
};

// Default declared totals of the shipped taxonomy.
inline constexpr TaxonomyCounts kDefaultTaxonomyCounts{7, 26, 40, 130};

// Structural checks: non-empty levels, unique ids, non-empty prompt texts.
// Error(kSchemaViolation) naming the node.
void validate_taxonomy(const Taxonomy& taxonomy);

// Parses and validates. Shape or enum problems raise kSchemaViolation; a node
// whose child count differs from its "expected_*" field, or totals that differ
// from "declared_counts", raise kCountMismatch naming the node.
Taxonomy taxonomy_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Taxonomy& taxonomy);
Taxonomy load_taxonomy(const std::string& path);

struct FactorScore {
  std::string factor_id;
  std::optional<int> score;  // nullopt is NA
  std::string rationale;
};

nlohmann::json to_json(const FactorScore& score);
FactorScore factor_score_from_json(const nlohmann::json& j);

struct JudgeInput {
  std::string task_query;
  std::string report;
  std::optional<std::string> expert_guidance;  // absent: guidance ablation
  const Taxonomy* taxonomy = nullptr;
  std::string judge_model_id = "judge";
};

struct JudgeOptions {
  int retry_budget = 2;
  int max_in_flight = 5;
  int max_output_tokens = 16384;
  // Asks for rationales of about this many sentences when set.
  std::optional<int> rationale_sentences;
};

inline constexpr std::string_view kJudgeSchemaId = "rubric_scores.v1";

ModelRequest build_judge_request(const JudgeInput& input, const Dimension& dimension, const JudgeOptions& options);

struct ParsedJudgeResponse {
  std::vector<FactorScore> scores;       // in taxonomy order
  std::vector<std::string> missing_ids;  // expected factors absent from the answer
};

// Error(kMalformedOutput) on shape problems, unknown ids, out-of-range scores
// or missing rationales.
ParsedJudgeResponse parse_judge_response(std::string_view text, const Dimension& dimension);

// One call per judged dimension, run concurrently. Scores come back in
// taxonomy order. Missing factors are re-asked; Error(kIncompleteScores)
// lists them once the budget is spent.
std::vector<FactorScore> judge_report(const JudgeInput& input, Gateway& gw, const JudgeOptions& options = {});

struct ElementAggregate {
  MaybeValue coverage;
  MaybeValue quality;
  MaybeValue combined;
};

struct AggregateScores {
  std::map<std::string, ElementAggregate> per_element;
  std::map<std::string, MaybeValue> per_criterion;
  std::map<std::string, MaybeValue> per_dimension;
  MaybeValue overall;
};

struct AggregateOptions {
  // Dimension id -> weight for the overall mean. Empty means unweighted.
  std::map<std::string, double> dimension_weights;
};

// Means up the hierarchy, skipping NA at every level. Factors without a score
// count as NA. When info is given, criteria carrying a metric take that
// component's value and their dimension is the mean of those.
// Error(kUnknownFactorId) for ids outside the taxonomy.
AggregateScores aggregate(const std::vector<FactorScore>& scores, const Taxonomy& taxonomy,
                          const InfoDimensionScores* info = nullptr, const AggregateOptions& options = {});

nlohmann::json to_json(const AggregateScores& scores, const Taxonomy& taxonomy);

}  // namespace reportcheck
