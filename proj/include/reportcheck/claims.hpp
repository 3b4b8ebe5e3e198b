#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reportcheck/gateway.hpp"
#include "reportcheck/report_model.hpp"

namespace reportcheck {

// A: cited. B: uncited, evidence earlier in the same section/paragraph.
// C: uncited, evidence in a previous section/paragraph. D: structural recap.
// E: no citation required. F: needs a source but none is given.
enum class ClaimType { kA, kB, kC, kD, kE, kF };

char claim_type_letter(ClaimType type);
std::optional<ClaimType> parse_claim_type(std::string_view letter);

// A-C need external evidence.
inline bool is_verifiable(ClaimType t) {
  return t == ClaimType::kA || t == ClaimType::kB || t == ClaimType::kC;
}
inline bool inherits_evidence(ClaimType t) { return t == ClaimType::kB || t == ClaimType::kC; }

struct ClaimId {
  PositionId position;
  int index = 0;

  auto operator<=>(const ClaimId&) const = default;
  std::string str() const;  // "L2.S1#1"
  static std::optional<ClaimId> parse(std::string_view text);
};

struct Claim {
  PositionId position;
  int index = 1;
  std::string claim_text;
  ClaimType claim_class = ClaimType::kE;
  std::vector<CitationKey> direct_citations;
  std::optional<PositionId> evidence_position;

  ClaimId id() const { return {position, index}; }
};

using ClaimSet = std::vector<Claim>;

// Throws Error(kSchemaViolation) when the class/field invariants do not hold.
void validate_claim(const Claim& claim);

nlohmann::json to_json(const Claim& claim);
Claim claim_from_json(const nlohmann::json& j);

struct ExtractionBatch {
  int batch_index = 1;
  std::vector<PositionId> target_positions;
};

std::vector<ExtractionBatch> plan_batches(const ReportDocument& doc, int batch_size);

struct ExtractionOptions {
  std::string model = "extractor";
  int retry_budget = 2;
  int max_output_tokens = 8192;
};

struct BatchExtraction {
  std::vector<Claim> claims;
  int retries = 0;
};

inline constexpr std::string_view kClaimSchemaId = "claims.v1";

ModelRequest build_extraction_request(const ReportDocument& doc, const ExtractionBatch& batch,
                                      const ExtractionOptions& options);

// Parses and validates one model answer for a batch. Throws
// Error(kMalformedOutput) describing the first violation.
std::vector<Claim> parse_extraction_response(std::string_view text, const ExtractionBatch& batch);

BatchExtraction extract_claims(const ReportDocument& doc, const ExtractionBatch& batch, Gateway& gw,
                               const ExtractionOptions& options);

// Union ordered by (position, index); Error(kDuplicateClaimId) on collisions.
ClaimSet merge_batches(const std::vector<std::vector<Claim>>& per_batch);

// Claims per paragraph block; 0 when the report has no paragraphs.
double claims_per_paragraph(const ClaimSet& claims, const ReportDocument& doc);

}  // namespace reportcheck
