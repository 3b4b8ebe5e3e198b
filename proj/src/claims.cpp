#include "reportcheck/claims.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "reportcheck/error.hpp"
#include "reportcheck/text.hpp"

namespace reportcheck {

char claim_type_letter(ClaimType type) { return static_cast<char>('A' + static_cast<int>(type)); }

std::optional<ClaimType> parse_claim_type(std::string_view letter) {
  letter = trim(letter);
  if (letter.size() != 1 || letter[0] < 'A' || letter[0] > 'F') return std::nullopt;
  return static_cast<ClaimType>(letter[0] - 'A');
}

std::string ClaimId::str() const { return position.str() + "#" + std::to_string(index); }

std::optional<ClaimId> ClaimId::parse(std::string_view text) {
  auto hash = text.find('#');
  if (hash == std::string_view::npos) return std::nullopt;
  auto pos = PositionId::parse(text.substr(0, hash));
  std::string digits(trim(text.substr(hash + 1)));
  if (!pos || digits.empty() || digits.size() > 6 ||
      !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  int index = std::stoi(digits);
  if (index < 1) return std::nullopt;
  return ClaimId{*pos, index};
}

void validate_claim(const Claim& c) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::kSchemaViolation, c.id().str() + ": " + why);
  };
  if (c.index < 1) fail("index must be >= 1");
  if (trim(c.claim_text).empty()) fail("empty claim_text");
  if (c.claim_class == ClaimType::kA && c.direct_citations.empty()) {
    fail("class A claim without direct citations");
  }
  if (inherits_evidence(c.claim_class)) {
    if (!c.evidence_position) fail("class B/C claim without evidence_position");
    if (!(*c.evidence_position < c.position)) fail("evidence_position is not earlier than the claim");
  } else if (c.evidence_position) {
    fail(std::string("class ") + claim_type_letter(c.claim_class) + " claim with evidence_position");
  }
}

nlohmann::json to_json(const Claim& c) {
  return {{"position", c.position.str()},
          {"index", c.index},
          {"claim_text", c.claim_text},
          {"claim_class", std::string(1, claim_type_letter(c.claim_class))},
          {"direct_citation", c.direct_citations},
          {"evidence_position",
           c.evidence_position ? nlohmann::json(c.evidence_position->str()) : nlohmann::json(nullptr)}};
}

namespace {

// Accepts [1, 2], "[1]", "[1, 2]", or a bare integer.
std::vector<CitationKey> citation_field(const nlohmann::json& j) {
  if (j.is_null()) return {};
  if (j.is_number_integer()) {
    int k = j.get<int>();
    if (k < 1) throw Error(ErrorCode::kMalformedOutput, "non-positive citation key");
    return {k};
  }
  if (j.is_string()) return parse_citations(j.get<std::string>());
  if (!j.is_array()) throw Error(ErrorCode::kMalformedOutput, "direct_citation must be a list");
  std::vector<CitationKey> keys;
  for (const auto& item : j) {
    if (!item.is_number_integer() || item.get<int>() < 1) {
      throw Error(ErrorCode::kMalformedOutput, "direct_citation entries must be positive integers");
    }
    if (std::find(keys.begin(), keys.end(), item.get<int>()) == keys.end()) keys.push_back(item.get<int>());
  }
  return keys;
}

Claim parse_claim_object(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kMalformedOutput, "claim entry is not an object");
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw Error(ErrorCode::kMalformedOutput, std::string("missing field ") + key);
    return j.at(key);
  };
  Claim c;
  const auto& pos = need("position");
  if (!pos.is_string() || !PositionId::parse(pos.get<std::string>())) {
    throw Error(ErrorCode::kMalformedOutput, "bad position");
  }
  c.position = *PositionId::parse(pos.get<std::string>());
  const auto& index = need("index");
  if (!index.is_number_integer()) throw Error(ErrorCode::kMalformedOutput, "index must be an integer");
  c.index = index.get<int>();
  const auto& text = need("claim_text");
  if (!text.is_string()) throw Error(ErrorCode::kMalformedOutput, "claim_text must be a string");
  c.claim_text = text.get<std::string>();
  const auto& cls = need("claim_class");
  auto type = cls.is_string() ? parse_claim_type(cls.get<std::string>()) : std::nullopt;
  if (!type) throw Error(ErrorCode::kMalformedOutput, "claim_class must be one of A-F");
  c.claim_class = *type;
  c.direct_citations = citation_field(j.contains("direct_citation") ? j.at("direct_citation") : nlohmann::json());
  const auto& ev = j.contains("evidence_position") ? j.at("evidence_position") : nlohmann::json();
  if (!ev.is_null()) {
    auto p = ev.is_string() ? PositionId::parse(ev.get<std::string>()) : std::nullopt;
    if (!p) throw Error(ErrorCode::kMalformedOutput, "bad evidence_position");
    c.evidence_position = *p;
  }
  return c;
}

}  // namespace

Claim claim_from_json(const nlohmann::json& j) {
  try {
    Claim c = parse_claim_object(j);
    validate_claim(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("claim json: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kSchemaViolation, e.detail());
  }
}

std::vector<ExtractionBatch> plan_batches(const ReportDocument& doc, int batch_size) {
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  std::vector<ExtractionBatch> batches;
  for (std::size_t i = 0; i < doc.sentences.size(); i += static_cast<std::size_t>(batch_size)) {
    ExtractionBatch batch;
    batch.batch_index = static_cast<int>(batches.size()) + 1;
    std::size_t end = std::min(doc.sentences.size(), i + static_cast<std::size_t>(batch_size));
    for (std::size_t k = i; k < end; ++k) batch.target_positions.push_back(doc.sentences[k].position);
    batches.push_back(std::move(batch));
  }
  return batches;
}

namespace {

constexpr std::string_view kExtractionSystem =
    R"(You are an expert fact-checker and claim extractor.

Split each target sentence into its core factual claims. Rewrite every claim so
it stands alone: replace pronouns and vague references with the entities they
refer to, using the full report for context. A sentence with no claim yields
nothing. Several claims from one sentence are numbered 1, 2, 3, ... in "index".

Classify each claim:
  A  the sentence itself carries a citation marker such as [1]
  B  no marker, but the supporting citation appears in an earlier sentence of the
     same section or paragraph
  C  no marker, but the supporting citation appears in a previous section or
     paragraph
  D  restatement of the report's own structure (introduction, summary, conclusion)
  E  needs no citation: general knowledge or the author's own result
  F  needs an external source, yet none is given anywhere

For A list the markers in "direct_citation". For B and C set
"evidence_position" to the position label (e.g. "L1.S3") of the earlier
sentence holding the citation; otherwise use null.

Answer with one JSON object and nothing else:
{"claims": [{"position": "L10.S1", "index": 1, "claim_text": "...",
             "claim_class": "A", "direct_citation": [1],
             "evidence_position": null}]})";

}  // namespace

ModelRequest build_extraction_request(const ReportDocument& doc, const ExtractionBatch& batch,
                                      const ExtractionOptions& options) {
  std::string user = "# Full Report Context\n";
  user += doc.labelled_text();
  user += "\n# Target Sentences to Extract Claims From\n";
  for (const auto& pos : batch.target_positions) {
    const SentenceUnit* unit = doc.find(pos);
    if (unit == nullptr) {
      throw Error(ErrorCode::kInvalidArgument, "batch position " + pos.str() + " not in document");
    }
    user += pos.str() + ": " + unit->text + "\n";
  }
  user +=
      "\nExtract claims only from the target sentences above. Use the full report context for "
      "coreference resolution.";
  ModelRequest request;
  request.model = options.model;
  request.system_text = std::string(kExtractionSystem);
  request.user_text = std::move(user);
  request.expected_schema = std::string(kClaimSchemaId);
  request.max_output_tokens = options.max_output_tokens;
  return request;
}

std::vector<Claim> parse_extraction_response(std::string_view text, const ExtractionBatch& batch) {
  nlohmann::json j = parse_model_json(text);
  const nlohmann::json* list = nullptr;
  if (j.is_object() && j.contains("claims")) {
    list = &j["claims"];
  } else if (j.is_array()) {
    list = &j;
  }
  if (list == nullptr || !list->is_array()) {
    throw Error(ErrorCode::kMalformedOutput, "expected an object with a \"claims\" array");
  }
  std::set<PositionId> targets(batch.target_positions.begin(), batch.target_positions.end());
  std::vector<Claim> claims;
  std::map<PositionId, std::vector<int>> indices;
  for (const auto& item : *list) {
    Claim c = parse_claim_object(item);
    if (!targets.count(c.position)) {
      throw Error(ErrorCode::kMalformedOutput, c.position.str() + " is not a target sentence");
    }
    try {
      validate_claim(c);
    } catch (const Error& e) {
      throw Error(ErrorCode::kMalformedOutput, e.detail());
    }
    indices[c.position].push_back(c.index);
    claims.push_back(std::move(c));
  }
  for (auto& [pos, idx] : indices) {
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] != static_cast<int>(i) + 1) {
        throw Error(ErrorCode::kMalformedOutput,
                    "claim indices for " + pos.str() + " must run 1.." + std::to_string(idx.size()));
      }
    }
  }
  std::sort(claims.begin(), claims.end(), [](const Claim& a, const Claim& b) { return a.id() < b.id(); });
  return claims;
}

BatchExtraction extract_claims(const ReportDocument& doc, const ExtractionBatch& batch, Gateway& gw,
                               const ExtractionOptions& options) {
  BatchExtraction result;
  try {
    result.claims = complete_with_reask(
        gw, build_extraction_request(doc, batch, options), "extract", options.retry_budget,
        [&](const ModelResponse& r) { return parse_extraction_response(r.text, batch); }, &result.retries);
  } catch (const Error& e) {
    throw Error(e.code(), "batch " + std::to_string(batch.batch_index) + ": " + e.detail());
  }
  return result;
}

ClaimSet merge_batches(const std::vector<std::vector<Claim>>& per_batch) {
  ClaimSet merged;
  for (const auto& batch : per_batch) merged.insert(merged.end(), batch.begin(), batch.end());
  std::sort(merged.begin(), merged.end(), [](const Claim& a, const Claim& b) { return a.id() < b.id(); });
  for (std::size_t i = 1; i < merged.size(); ++i) {
    if (merged[i - 1].id() == merged[i].id()) {
      throw Error(ErrorCode::kDuplicateClaimId, merged[i].id().str());
    }
  }
  return merged;
}

double claims_per_paragraph(const ClaimSet& claims, const ReportDocument& doc) {
  std::size_t paragraphs = doc.paragraph_block_count();
  if (paragraphs == 0) return 0.0;
  return static_cast<double>(claims.size()) / static_cast<double>(paragraphs);
}

}  // namespace reportcheck
