#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "reportcheck/backtrack.hpp"
#include "reportcheck/claims.hpp"
#include "reportcheck/evidence.hpp"
#include "reportcheck/verify.hpp"

namespace reportcheck {

// nullopt marks a ratio whose denominator was zero.
using MaybeValue = std::optional<double>;

struct IntegrityMetrics {
  MaybeValue ext_claim_accuracy;
  MaybeValue citation_accuracy;
  MaybeValue reference_accuracy;
  MaybeValue reproducibility;
  MaybeValue reliability;
  MaybeValue diversity_cv;
};

struct SufficiencyMetrics {
  MaybeValue verifiable_ratio;
  long info_qty = 0;
  long cit_qty = 0;
  long ref_qty = 0;
};

struct MetricsConfig {
  double info_qty_threshold = 50.0;
  double cit_qty_threshold = 40.0;
  double ref_qty_threshold = 15.0;
  double cv_cap = 2.0;
  // Host suffixes. A non-empty allow list admits only matching hosts.
  std::vector<std::string> reliable_allow;
  std::vector<std::string> reliable_deny;
};

// Error(kConfig) on non-positive thresholds.
void validate_metrics_config(const MetricsConfig& config);
nlohmann::json to_json(const MetricsConfig& config);
MetricsConfig metrics_config_from_json(const nlohmann::json& j);

// Fetched ok and not excluded by the allow/deny lists.
bool is_reliable(const FetchedSource& source, const MetricsConfig& config);

// Keys in any claim's valid citation set.
std::set<CitationKey> used_references(const std::vector<EvidenceResolution>& resolutions);

IntegrityMetrics compute_integrity(const ClaimSet& claims, const std::vector<EvidenceResolution>& resolutions,
                                   const std::vector<VerificationRecord>& records, const ReportDocument& doc,
                                   const std::vector<FetchedSource>& sources, const MetricsConfig& config = {});

SufficiencyMetrics compute_sufficiency(const ClaimSet& claims, const std::vector<VerificationRecord>& records);

struct InfoDimensionScores {
  MaybeValue information_integrity;
  MaybeValue information_sufficiency;
  std::map<std::string, MaybeValue> components;  // metric name -> sub-score in [1,10]
};

// Ratios: 1 + 9r. Counts: 1 + 9 min(count / threshold, 1). CV: 1 + 9 (1 - min(cv / cap, 1)).
InfoDimensionScores normalize_to_dimensions(const IntegrityMetrics& integrity, const SufficiencyMetrics& sufficiency,
                                            const MetricsConfig& config);

nlohmann::json to_json(const IntegrityMetrics& m);
nlohmann::json to_json(const SufficiencyMetrics& m);
nlohmann::json to_json(const InfoDimensionScores& s);

// Population standard deviation over mean; nullopt for empty input or zero mean.
MaybeValue coefficient_of_variation(const std::vector<double>& values);

}  // namespace reportcheck
