#include "reportcheck/backtrack.hpp"

#include <algorithm>
#include <functional>

#include "reportcheck/error.hpp"

namespace reportcheck {

ClaimIndex index_by_position(const ClaimSet& claims) {
  ClaimIndex index;
  for (const auto& c : claims) index[c.position].push_back(&c);
  return index;
}

namespace {

// Explicit citations held at a position, or nullopt when nothing is there.
std::optional<std::set<CitationKey>> explicit_at(PositionId position, const ClaimIndex& index,
                                                 const ReportDocument& doc) {
  if (auto it = index.find(position); it != index.end() && !it->second.empty()) {
    std::set<CitationKey> keys;
    for (const Claim* c : it->second) keys.insert(c->direct_citations.begin(), c->direct_citations.end());
    return keys;
  }
  if (const SentenceUnit* unit = doc.find(position)) {
    return std::set<CitationKey>(unit->citations.begin(), unit->citations.end());
  }
  return std::nullopt;
}

std::set<CitationKey> transitive_at(PositionId position, const ClaimIndex& index, const ReportDocument& doc,
                                    std::set<PositionId>& visiting) {
  std::set<CitationKey> keys;
  if (!visiting.insert(position).second) return keys;
  auto it = index.find(position);
  if (it == index.end() || it->second.empty()) {
    if (auto direct = explicit_at(position, index, doc)) keys = *direct;
  } else {
    for (const Claim* c : it->second) {
      keys.insert(c->direct_citations.begin(), c->direct_citations.end());
      if (inherits_evidence(c->claim_class) && c->evidence_position) {
        auto deeper = transitive_at(*c->evidence_position, index, doc, visiting);
        keys.insert(deeper.begin(), deeper.end());
      }
    }
  }
  visiting.erase(position);
  return keys;
}

}  // namespace

EvidenceResolution resolve_valid_citations(const Claim& claim, const ClaimIndex& claims_by_position,
                                           const ReportDocument& doc, BacktrackOptions options) {
  EvidenceResolution r;
  r.claim_id = claim.id();
  if (inherits_evidence(claim.claim_class) && claim.evidence_position) {
    auto found = explicit_at(*claim.evidence_position, claims_by_position, doc);
    if (!found) {
      r.dangling_evidence_position = true;
    } else {
      r.inheritance_source = claim.evidence_position;
      if (options.transitive) {
        std::set<PositionId> visiting{claim.position};
        r.inherited_citations = transitive_at(*claim.evidence_position, claims_by_position, doc, visiting);
      } else {
        r.inherited_citations = std::move(*found);
      }
    }
  }
  r.valid_citations.insert(claim.direct_citations.begin(), claim.direct_citations.end());
  r.valid_citations.insert(r.inherited_citations.begin(), r.inherited_citations.end());
  return r;
}

std::vector<EvidenceResolution> resolve_all(const ClaimSet& claims, const ReportDocument& doc,
                                            BacktrackOptions options) {
  auto index = index_by_position(claims);
  std::vector<EvidenceResolution> out;
  out.reserve(claims.size());
  for (const auto& c : claims) out.push_back(resolve_valid_citations(c, index, doc, options));
  return out;
}

std::set<CitationKey> sliding_window_citations(const ReportDocument& doc, const Claim& claim, int k) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "window size must be >= 1");
  std::set<CitationKey> keys;
  auto center = doc.ordinal(claim.position);
  if (!center) return keys;
  std::size_t half = static_cast<std::size_t>(k / 2);
  std::size_t lo = *center >= half ? *center - half : 0;
  std::size_t hi = std::min(doc.sentences.size() - 1, *center + half);
  for (std::size_t i = lo; i <= hi; ++i) {
    keys.insert(doc.sentences[i].citations.begin(), doc.sentences[i].citations.end());
  }
  return keys;
}

EvidenceSetScore compare_evidence_sets(const std::set<CitationKey>& predicted,
                                       const std::set<CitationKey>& gold) {
  if (gold.empty()) throw Error(ErrorCode::kEmptyGold, "gold evidence set is empty");
  std::vector<CitationKey> both;
  std::set_intersection(predicted.begin(), predicted.end(), gold.begin(), gold.end(),
                        std::back_inserter(both));
  std::vector<CitationKey> either;
  std::set_union(predicted.begin(), predicted.end(), gold.begin(), gold.end(), std::back_inserter(either));
  auto inter = static_cast<double>(both.size());
  EvidenceSetScore s;
  s.jaccard = inter / static_cast<double>(either.size());
  s.precision = predicted.empty() ? 0.0 : inter / static_cast<double>(predicted.size());
  s.recall = inter / static_cast<double>(gold.size());
  return s;
}

EvidenceSetScore mean_score(std::span<const EvidenceSetScore> scores) {
  EvidenceSetScore mean;
  if (scores.empty()) return mean;
  for (const auto& s : scores) {
    mean.jaccard += s.jaccard;
    mean.precision += s.precision;
    mean.recall += s.recall;
  }
  auto n = static_cast<double>(scores.size());
  mean.jaccard /= n;
  mean.precision /= n;
  mean.recall /= n;
  return mean;
}

nlohmann::json to_json(const EvidenceResolution& r) {
  return {{"claim_id", r.claim_id.str()},
          {"valid_citations", r.valid_citations},
          {"inherited_citations", r.inherited_citations},
          {"inheritance_source",
           r.inheritance_source ? nlohmann::json(r.inheritance_source->str()) : nlohmann::json(nullptr)},
          {"dangling_evidence_position", r.dangling_evidence_position}};
}

EvidenceResolution resolution_from_json(const nlohmann::json& j) {
  try {
    EvidenceResolution r;
    auto id = ClaimId::parse(j.at("claim_id").get<std::string>());
    if (!id) throw Error(ErrorCode::kSchemaViolation, "bad claim_id");
    r.claim_id = *id;
    r.valid_citations = j.at("valid_citations").get<std::set<CitationKey>>();
    r.inherited_citations = j.at("inherited_citations").get<std::set<CitationKey>>();
    if (!j.at("inheritance_source").is_null()) {
      r.inheritance_source = PositionId::parse(j.at("inheritance_source").get<std::string>());
    }
    r.dangling_evidence_position = j.at("dangling_evidence_position").get<bool>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("resolution json: ") + e.what());
  }
}

}  // namespace reportcheck
