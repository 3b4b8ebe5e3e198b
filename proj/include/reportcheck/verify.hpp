#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reportcheck/backtrack.hpp"
#include "reportcheck/claims.hpp"
#include "reportcheck/evidence.hpp"
#include "reportcheck/gateway.hpp"

namespace reportcheck {

enum class Verdict { kSupported, kNotSupported };

std::string_view verdict_name(Verdict v);  // "Supported" / "NotSupported"
std::optional<Verdict> parse_verdict(std::string_view name);

struct VerificationRecord {
  ClaimId claim_id;
  ClaimType claim_class = ClaimType::kA;
  Verdict verdict = Verdict::kNotSupported;
  std::string rationale;
  std::set<CitationKey> citations_checked;
  std::map<CitationKey, Verdict> per_citation_verdicts;
  std::vector<std::string> context_hashes;
  double cost_usd = 0.0;
};

nlohmann::json to_json(const VerificationRecord& r);
VerificationRecord verification_record_from_json(const nlohmann::json& j);

struct VerificationGroup {
  int group_index = 1;
  std::vector<Claim> claims;  // document order
  std::set<CitationKey> shared_sources;
};

// Eligible claims (A-C with a non-empty valid set) bucketed by primary source
// (smallest valid key). Each bucket yields full groups first; the leftovers
// are packed first-fit into shared groups. Groups are ordered by first claim.
std::vector<VerificationGroup> group_claims(const ClaimSet& claims, const std::vector<EvidenceResolution>& resolutions,
                                            int group_size = 20);

struct VerifyOptions {
  std::string model = "verifier";
  int group_size = 20;
  int retry_budget = 2;
  std::size_t max_in_flight = 4;
  int max_output_tokens = 8192;
};

inline constexpr std::string_view kVerificationSchemaId = "verification.v1";

using ContextMap = std::map<ClaimId, ContextSelection>;

// One model call for every claim in the group that has context. Claims with an
// empty context, and citations with no selected chunk, are NotSupported
// without asking.
std::vector<VerificationRecord> verify_group(const VerificationGroup& group, const ContextMap& contexts,
                                             const std::map<ClaimId, EvidenceResolution>& resolutions, Gateway& gw,
                                             const VerifyOptions& options);

// Records for every A-C and F claim in document order. D/E get none.
std::vector<VerificationRecord> verify_claims(const ClaimSet& claims, const std::vector<EvidenceResolution>& resolutions,
                                              const ContextMap& contexts, Gateway& gw, const VerifyOptions& options);

// Symmetric token similarity: max of multiset overlap (Dice) and longest
// common contiguous run, both scaled to [0,1].
double quote_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Best similarity of sentence against any sentence-length window of source.
double window_similarity(const std::vector<std::string>& sentence, const std::vector<std::string>& source);

struct DetectedQuote {
  PositionId position;
  CitationKey source_key = 0;
  double similarity = 0.0;
  bool properly_marked = false;
  bool cited = false;
  bool compliant = true;
  std::string rationale;
};

struct FairUseReport {
  std::vector<DetectedQuote> detected_quotes;
  double noncompliant_ratio = 0.0;
  double score = 10.0;
};

nlohmann::json to_json(const FairUseReport& r);
FairUseReport fair_use_from_json(const nlohmann::json& j);

struct FairUseOptions {
  double tau = 0.9;
  std::size_t min_tokens = 6;  // shorter sentences are not checked
  std::string model = "verifier";
  std::size_t top_n = 3;
  int retry_budget = 2;
};

// Quoted and cited matches pass without a model call; every other match is
// put to the model together with the best matching chunks of the source.
FairUseReport detect_direct_quotes(const ReportDocument& doc, const std::vector<FetchedSource>& sources,
                                   const std::map<CitationKey, std::vector<Chunk>>& chunks_by_source, Gateway& gw,
                                   const FairUseOptions& options);

// 10 * (1 - noncompliant / detected); 10 when nothing was detected.
double fair_use_score(std::size_t detected, std::size_t noncompliant);

}  // namespace reportcheck
