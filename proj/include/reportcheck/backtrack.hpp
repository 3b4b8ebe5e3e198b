#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include <json.hpp>

#include "reportcheck/claims.hpp"
#include "reportcheck/report_model.hpp"

namespace reportcheck {

struct EvidenceResolution {
  ClaimId claim_id;
  std::set<CitationKey> inherited_citations;
  std::set<CitationKey> valid_citations;  // direct ∪ inherited
  std::optional<PositionId> inheritance_source;
  bool dangling_evidence_position = false;
};

// Claims grouped by sentence position. Holds pointers into a ClaimSet that
// must outlive the index.
using ClaimIndex = std::map<PositionId, std::vector<const Claim*>>;

ClaimIndex index_by_position(const ClaimSet& claims);

struct BacktrackOptions {
  // Follow evidence pointers through intermediate B/C claims instead of
  // stopping after one hop.
  bool transitive = false;
};

// B/C claims inherit the explicit citations held at their evidence position:
// the direct citations of the claims extracted there, or the sentence's own
// markers when no claim was extracted from it. Other classes inherit nothing.
EvidenceResolution resolve_valid_citations(const Claim& claim, const ClaimIndex& claims_by_position,
                                           const ReportDocument& doc, BacktrackOptions options = {});

std::vector<EvidenceResolution> resolve_all(const ClaimSet& claims, const ReportDocument& doc,
                                            BacktrackOptions options = {});

// Union of explicit citations of sentences within floor(k/2) sentences of the
// claim's sentence, counted in global document order.
std::set<CitationKey> sliding_window_citations(const ReportDocument& doc, const Claim& claim, int k);

struct EvidenceSetScore {
  double jaccard = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Precision is 0 for an empty prediction. Error(kEmptyGold) when gold is empty.
EvidenceSetScore compare_evidence_sets(const std::set<CitationKey>& predicted,
                                       const std::set<CitationKey>& gold);

// Unweighted mean over claims.
EvidenceSetScore mean_score(std::span<const EvidenceSetScore> scores);

nlohmann::json to_json(const EvidenceResolution& r);
EvidenceResolution resolution_from_json(const nlohmann::json& j);

}  // namespace reportcheck
