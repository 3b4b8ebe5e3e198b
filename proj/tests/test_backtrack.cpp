#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "reportcheck/backtrack.hpp"
#include "reportcheck/error.hpp"
#include "support/fixtures.hpp"
#include "support/random_report.hpp"

using namespace reportcheck;

namespace {

ClaimSet annotated_claims() {
  auto j = nlohmann::json::parse(testsupport::kAnnotatedAnswer);
  ClaimSet claims;
  for (const auto& c : j["claims"]) claims.push_back(claim_from_json(c));
  return claims;
}

Claim claim(std::string_view pos, ClaimType type, std::vector<CitationKey> direct = {},
            std::optional<std::string_view> evidence = std::nullopt, int index = 1) {
  Claim c;
  c.position = *PositionId::parse(pos);
  c.index = index;
  c.claim_text = "claim";
  c.claim_class = type;
  c.direct_citations = std::move(direct);
  if (evidence) c.evidence_position = PositionId::parse(*evidence);
  return c;
}

// Literal reading of the piecewise definition: B/C inherit the R_j of the
// claims at the referenced position, everything else inherits nothing.
std::set<CitationKey> oracle_valid(const Claim& c, const ClaimSet& all, const ReportDocument& doc) {
  std::set<CitationKey> out(c.direct_citations.begin(), c.direct_citations.end());
  if (c.claim_class != ClaimType::kB && c.claim_class != ClaimType::kC) return out;
  bool any = false;
  for (const auto& other : all) {
    if (other.position == *c.evidence_position) {
      any = true;
      out.insert(other.direct_citations.begin(), other.direct_citations.end());
    }
  }
  if (!any) {
    for (const auto& s : doc.sentences)
      if (s.position == *c.evidence_position) out.insert(s.citations.begin(), s.citations.end());
  }
  return out;
}

std::set<CitationKey> brute_window(const ReportDocument& doc, std::size_t center, int k) {
  std::set<CitationKey> out;
  for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
    long d = static_cast<long>(i) - static_cast<long>(center);
    if (std::abs(d) <= k / 2) out.insert(doc.sentences[i].citations.begin(), doc.sentences[i].citations.end());
  }
  return out;
}

}  // namespace

TEST_CASE("annotated example resolves implicit citations") {
  auto doc = segment_report(testsupport::fixture("annotated_report.md"));
  auto claims = annotated_claims();
  auto res = resolve_all(claims, doc);
  REQUIRE(res.size() == 4);
  CHECK(res[0].valid_citations == std::set<CitationKey>{1});
  CHECK(res[0].inherited_citations.empty());
  CHECK(res[1].claim_id.position.str() == "L2.S1");
  CHECK(res[1].valid_citations == std::set<CitationKey>{1});
  CHECK(res[1].inheritance_source->str() == "L1.S3");
  // no claim extracted at L1.S2, so the sentence's own marker is used
  CHECK(res[2].valid_citations == std::set<CitationKey>{2});
  CHECK(res[3].valid_citations.empty());
}

TEST_CASE("class A keeps its direct citations only") {
  auto doc = segment_report("Alpha holds [1].\n\n[1] https://a.example\n");
  ClaimSet claims = {claim("L1.S1", ClaimType::kA, {1})};
  auto r = resolve_valid_citations(claims[0], index_by_position(claims), doc);
  CHECK(r.valid_citations == std::set<CitationKey>{1});
  CHECK(r.inherited_citations.empty());
  CHECK_FALSE(r.dangling_evidence_position);
}

TEST_CASE("one-hop semantics and the transitive flag") {
  auto doc = segment_report("First fact [3]. Second builds on it. Third follows.\n");
  ClaimSet claims = {claim("L1.S1", ClaimType::kA, {3}), claim("L1.S2", ClaimType::kB, {}, "L1.S1"),
                     claim("L1.S3", ClaimType::kC, {}, "L1.S2")};
  auto index = index_by_position(claims);
  auto x = resolve_valid_citations(claims[2], index, doc);
  CHECK(x.valid_citations.empty());
  CHECK(x.inheritance_source->str() == "L1.S2");
  auto t = resolve_valid_citations(claims[2], index, doc, {.transitive = true});
  CHECK(t.valid_citations == std::set<CitationKey>{3});
  // idempotent: resolving again gives the same answer and claims are untouched
  CHECK(resolve_valid_citations(claims[2], index, doc).valid_citations == x.valid_citations);
  CHECK(claims[2].direct_citations.empty());
}

TEST_CASE("dangling evidence positions are flagged, not fatal") {
  auto doc = segment_report("Only one sentence [1].\n\nSecond paragraph.\n");
  ClaimSet claims = {claim("L2.S1", ClaimType::kB, {2}, "L1.S5")};
  auto r = resolve_valid_citations(claims[0], index_by_position(claims), doc);
  CHECK(r.dangling_evidence_position);
  CHECK(r.inherited_citations.empty());
  CHECK(r.valid_citations == std::set<CitationKey>{2});
}

TEST_CASE("property: resolution matches the piecewise oracle on random claims") {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> cls(0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    auto doc = segment_report(testsupport::random_report(rng));
    ClaimSet claims;
    for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
      const auto& s = doc.sentences[i];
      if (rng() % 3 == 0) continue;  // leave some sentences without claims
      auto type = static_cast<ClaimType>(cls(rng));
      if (inherits_evidence(type) && i == 0) type = ClaimType::kE;
      Claim c = claim(s.position.str(), type);
      if (type == ClaimType::kA) c.direct_citations = s.citations.empty() ? std::vector<CitationKey>{1} : s.citations;
      if (inherits_evidence(type)) c.evidence_position = doc.sentences[rng() % i].position;
      claims.push_back(c);
    }
    auto res = resolve_all(claims, doc);
    for (std::size_t i = 0; i < claims.size(); ++i) {
      CHECK(res[i].valid_citations == oracle_valid(claims[i], claims, doc));
      for (auto k : claims[i].direct_citations) CHECK(res[i].valid_citations.count(k) == 1);
      if (claims[i].claim_class == ClaimType::kD || claims[i].claim_class == ClaimType::kE)
        CHECK(res[i].inherited_citations.empty());
    }
  }
}

TEST_CASE("sliding window examples") {
  auto doc = segment_report(
      "One. Two. Three [2]. Four. Five [9]. Six. Seven [4]. Eight. Nine [7].\n");
  REQUIRE(doc.sentences.size() == 9);
  Claim c = claim("L1.S5", ClaimType::kE);
  CHECK(sliding_window_citations(doc, c, 1) == std::set<CitationKey>{9});
  Claim quiet = claim("L1.S4", ClaimType::kE);
  CHECK(sliding_window_citations(doc, quiet, 1).empty());
  auto doc2 = segment_report("One. Two. Three [2]. Four. Five. Six. Seven [4]. Eight. Nine.\n");
  CHECK(sliding_window_citations(doc2, c, 5) == std::set<CitationKey>{2, 4});
  CHECK(sliding_window_citations(doc2, c, 4) == std::set<CitationKey>{2, 4});
  CHECK(sliding_window_citations(doc2, c, 3).empty());
  CHECK(sliding_window_citations(doc2, claim("L1.S1", ClaimType::kE), 100) == std::set<CitationKey>{2, 4});
  CHECK_THROWS_AS(sliding_window_citations(doc2, c, 0), Error);
}

TEST_CASE("property: window matches a brute-force scan and grows with k") {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    auto doc = segment_report(testsupport::random_report(rng));
    if (doc.sentences.empty()) continue;
    std::size_t center = rng() % doc.sentences.size();
    Claim c = claim(doc.sentences[center].position.str(), ClaimType::kE);
    std::set<CitationKey> previous;
    for (int k = 1; k <= 12; ++k) {
      auto got = sliding_window_citations(doc, c, k);
      CHECK(got == brute_window(doc, center, k));
      CHECK(std::includes(got.begin(), got.end(), previous.begin(), previous.end()));
      for (auto key : doc.sentences[center].citations) CHECK(got.count(key) == 1);
      previous = got;
    }
  }
}

TEST_CASE("evidence set comparison") {
  auto same = compare_evidence_sets({1, 2}, {1, 2});
  CHECK(same.jaccard == 1.0);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  auto s = compare_evidence_sets({1, 2}, {2, 3});
  CHECK(s.jaccard == doctest::Approx(1.0 / 3.0));
  CHECK(s.precision == 0.5);
  CHECK(s.recall == 0.5);
  auto empty = compare_evidence_sets({}, {1});
  CHECK(empty.jaccard == 0.0);
  CHECK(empty.precision == 0.0);
  CHECK(empty.recall == 0.0);
  try {
    compare_evidence_sets({1}, {});
    FAIL("expected empty_gold");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyGold);
  }
  std::vector<EvidenceSetScore> scores = {same, s, empty};
  auto mean = mean_score(scores);
  CHECK(mean.jaccard == doctest::Approx((1.0 + 1.0 / 3.0 + 0.0) / 3.0));
  CHECK(mean.precision == doctest::Approx(0.5));
}

TEST_CASE("resolution json round-trip") {
  auto doc = segment_report(testsupport::fixture("annotated_report.md"));
  for (const auto& r : resolve_all(annotated_claims(), doc)) {
    CHECK(to_json(resolution_from_json(to_json(r))) == to_json(r));
  }
}
