#include <doctest.h>

#include <cmath>
#include <random>

#include "reportcheck/error.hpp"
#include "reportcheck/metrics.hpp"
#include "support/metric_oracle.hpp"

using namespace reportcheck;

namespace {

Claim make(int block, ClaimType type) {
  Claim c;
  c.position = {block, 1};
  c.claim_text = "c";
  c.claim_class = type;
  return c;
}

VerificationRecord record(const Claim& c, std::map<CitationKey, Verdict> verdicts) {
  VerificationRecord r;
  r.claim_id = c.id();
  r.claim_class = c.claim_class;
  for (const auto& [k, v] : verdicts) {
    r.citations_checked.insert(k);
    r.per_citation_verdicts[k] = v;
    if (v == Verdict::kSupported) r.verdict = Verdict::kSupported;
  }
  return r;
}

EvidenceResolution resolution(const Claim& c, std::set<CitationKey> keys) {
  EvidenceResolution r;
  r.claim_id = c.id();
  r.valid_citations = std::move(keys);
  return r;
}

FetchedSource source(int key, bool ok, std::string host = "a.example") {
  FetchedSource s;
  s.key = key;
  s.url = "https://" + host + "/" + std::to_string(key);
  s.status = ok ? FetchStatus::kOk : FetchStatus::kHttpError;
  return s;
}

}  // namespace

TEST_CASE("ratio examples") {
  ClaimSet claims;
  std::vector<VerificationRecord> records;
  std::vector<EvidenceResolution> res;
  for (int i = 1; i <= 8; ++i) {
    claims.push_back(make(i, ClaimType::kA));
    records.push_back(record(claims.back(), {{1, i <= 6 ? Verdict::kSupported : Verdict::kNotSupported}}));
    res.push_back(resolution(claims.back(), {1}));
  }
  claims.push_back(make(9, ClaimType::kE));
  res.push_back(resolution(claims.back(), {}));
  claims.push_back(make(10, ClaimType::kD));
  res.push_back(resolution(claims.back(), {}));
  auto doc = segment_report("x\n\n## References\n\n[1] https://a.example/1\n");
  auto in = compute_integrity(claims, res, records, doc, {source(1, true)});
  CHECK(*in.ext_claim_accuracy == 0.75);
  CHECK(*in.citation_accuracy == 0.75);
  CHECK(*in.reference_accuracy == 1.0);
  auto su = compute_sufficiency(claims, records);
  CHECK(*su.verifiable_ratio == doctest::Approx(0.8));
  CHECK(su.info_qty == 6);
  CHECK(su.cit_qty == 6);
  CHECK(su.ref_qty == 1);

  ClaimSet ten;
  for (int i = 1; i <= 10; ++i) ten.push_back(make(i, i <= 6 ? ClaimType::kB : ClaimType::kE));
  CHECK(*compute_sufficiency(ten, {}).verifiable_ratio == doctest::Approx(0.6));
  auto none = compute_sufficiency(ten, {});
  CHECK(none.info_qty == 0);
  CHECK(none.cit_qty == 0);
  CHECK(none.ref_qty == 0);
  CHECK_FALSE(compute_sufficiency({}, {}).verifiable_ratio);
}

TEST_CASE("coefficient of variation") {
  CHECK(*coefficient_of_variation({2, 2, 2}) == 0.0);
  CHECK(*coefficient_of_variation({1, 2, 3}) == doctest::Approx(std::sqrt(2.0 / 3.0) / 2.0).epsilon(1e-12));
  CHECK(*coefficient_of_variation({10, 20, 30}) == doctest::Approx(*coefficient_of_variation({1, 2, 3})).epsilon(1e-12));
  CHECK_FALSE(coefficient_of_variation({}));
  CHECK_FALSE(coefficient_of_variation({0, 0}));
}

TEST_CASE("used references, reproducibility and reliability") {
  ClaimSet claims = {make(1, ClaimType::kA), make(2, ClaimType::kA), make(3, ClaimType::kA)};
  std::vector<EvidenceResolution> res = {resolution(claims[0], {1}), resolution(claims[1], {1, 2}),
                                         resolution(claims[2], {3})};
  std::vector<VerificationRecord> records = {record(claims[0], {{1, Verdict::kSupported}}),
                                             record(claims[1], {{1, Verdict::kSupported}, {2, Verdict::kNotSupported}}),
                                             record(claims[2], {{3, Verdict::kSupported}})};
  auto doc = segment_report(
      "x\n\n## References\n\n[1] https://a.example/1\n[2] https://b.example/2\n[3] https://spam.example/3\n"
      "[4] https://a.example/4\n");
  std::vector<FetchedSource> sources = {source(1, true), source(2, false), source(3, true, "spam.example"),
                                        source(4, true)};
  MetricsConfig cfg;
  cfg.reliable_deny = {"spam.example"};
  auto in = compute_integrity(claims, res, records, doc, sources, cfg);
  CHECK(*in.reproducibility == doctest::Approx(2.0 / 3.0));
  CHECK(*in.reliability == doctest::Approx(1.0 / 3.0));
  CHECK(*in.reference_accuracy == doctest::Approx(2.0 / 4.0));
  CHECK(*in.citation_accuracy == doctest::Approx(3.0 / 4.0));
  // counts per used reference: [1] 2, [2] 1, [3] 1
  CHECK(*in.diversity_cv == doctest::Approx(*coefficient_of_variation({2, 1, 1})).epsilon(1e-12));
  CHECK(compute_sufficiency(claims, records).ref_qty == 2);

  auto empty = compute_integrity({}, {}, {}, segment_report("x"), {});
  CHECK_FALSE(empty.ext_claim_accuracy);
  CHECK_FALSE(empty.reproducibility);
  CHECK_FALSE(empty.diversity_cv);
  CHECK(to_json(empty)["undefined"].size() == 6);
}

TEST_CASE("ten fetched references with two errors") {
  ClaimSet claims;
  std::vector<EvidenceResolution> res;
  std::vector<FetchedSource> sources;
  for (int k = 1; k <= 10; ++k) {
    claims.push_back(make(k, ClaimType::kA));
    res.push_back(resolution(claims.back(), {k}));
    sources.push_back(source(k, k != 3 && k != 7));
  }
  auto in = compute_integrity(claims, res, {}, segment_report("x"), sources);
  CHECK(*in.reproducibility == doctest::Approx(0.8));
}

TEST_CASE("property: metrics equal the direct formulas") {
  std::mt19937 rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    auto m = testsupport::random_metric_instance(rng);
    CHECK(testsupport::metrics_match(m, 1e-12));
    auto in = compute_integrity(m.claims, m.resolutions, m.records, m.doc, m.sources, m.config);
    for (auto v : {in.ext_claim_accuracy, in.citation_accuracy, in.reference_accuracy, in.reproducibility,
                   in.reliability}) {
      if (v) CHECK((*v >= 0.0 && *v <= 1.0));
    }
    auto dims = normalize_to_dimensions(in, compute_sufficiency(m.claims, m.records), m.config);
    for (auto v : {dims.information_integrity, dims.information_sufficiency}) {
      if (v) CHECK((*v >= 1.0 && *v <= 10.0));
    }
  }
}

TEST_CASE("property: one more Supported record never lowers the counts") {
  std::mt19937 rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    auto m = testsupport::random_metric_instance(rng);
    auto before_in = compute_integrity(m.claims, m.resolutions, m.records, m.doc, m.sources, m.config);
    auto before = compute_sufficiency(m.claims, m.records);
    for (auto& r : m.records) {
      if (!is_verifiable(r.claim_class) || r.verdict == Verdict::kSupported || r.citations_checked.empty()) continue;
      r.per_citation_verdicts[*r.citations_checked.begin()] = Verdict::kSupported;
      r.verdict = Verdict::kSupported;
      break;
    }
    auto after_in = compute_integrity(m.claims, m.resolutions, m.records, m.doc, m.sources, m.config);
    auto after = compute_sufficiency(m.claims, m.records);
    CHECK(after.info_qty >= before.info_qty);
    CHECK(after.cit_qty >= before.cit_qty);
    CHECK(after.ref_qty >= before.ref_qty);
    if (before_in.ext_claim_accuracy) CHECK(*after_in.ext_claim_accuracy >= *before_in.ext_claim_accuracy);
  }
}

TEST_CASE("normalization") {
  IntegrityMetrics perfect{1.0, 1.0, 1.0, 1.0, 1.0, 0.0};
  SufficiencyMetrics full{1.0, 50, 40, 15};
  auto top = normalize_to_dimensions(perfect, full, {});
  CHECK(*top.information_integrity == 10.0);
  CHECK(*top.information_sufficiency == 10.0);

  IntegrityMetrics half;
  half.ext_claim_accuracy = 0.5;
  auto only = normalize_to_dimensions(half, {}, {});
  CHECK(*only.components["ext_claim_accuracy"] == 5.5);
  CHECK(*only.information_integrity == 5.5);

  IntegrityMetrics mixed{0.8, 0.6, std::nullopt, 1.0, 0.5, 1.0};
  SufficiencyMetrics some{0.9, 25, 80, 3};
  auto d = normalize_to_dimensions(mixed, some, {});
  double integrity = ((1 + 9 * 0.8) + (1 + 9 * 0.6) + 10.0 + (1 + 9 * 0.5) + (1 + 9 * 0.5)) / 5.0;
  double sufficiency = ((1 + 9 * 0.9) + (1 + 9 * 0.5) + 10.0 + (1 + 9 * 0.2)) / 4.0;
  CHECK(*d.information_integrity == doctest::Approx(integrity).epsilon(1e-12));
  CHECK(*d.information_sufficiency == doctest::Approx(sufficiency).epsilon(1e-12));
  CHECK_FALSE(d.components["reference_accuracy"]);

  MetricsConfig bad;
  bad.cit_qty_threshold = 0;
  CHECK_THROWS_AS(normalize_to_dimensions(mixed, some, bad), Error);
  CHECK_THROWS_AS(metrics_config_from_json({{"cv_cap", -1}}), Error);
  CHECK(to_json(metrics_config_from_json(to_json(MetricsConfig{}))) == to_json(MetricsConfig{}));
}
