#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "reportcheck/metrics.hpp"

namespace testsupport {

struct MetricInstance {
  reportcheck::ReportDocument doc;
  reportcheck::ClaimSet claims;
  std::vector<reportcheck::EvidenceResolution> resolutions;
  std::vector<reportcheck::VerificationRecord> records;
  std::vector<reportcheck::FetchedSource> sources;
  reportcheck::MetricsConfig config;
};

inline MetricInstance random_metric_instance(std::mt19937& rng) {
  using namespace reportcheck;
  MetricInstance m;
  int refs = static_cast<int>(rng() % 8);
  const char* hosts[] = {"good.example", "news.example", "spam.example", "sub.good.example"};
  for (int k = 1; k <= refs; ++k) {
    ReferenceEntry e;
    e.key = k;
    e.url = std::string("https://") + hosts[rng() % 4] + "/" + std::to_string(k);
    m.doc.references[k] = e;
    if (rng() % 6 == 0) continue;  // never fetched
    FetchedSource s;
    s.key = k;
    s.url = e.url;
    s.status = rng() % 4 == 0 ? FetchStatus::kHttpError : FetchStatus::kOk;
    if (s.ok()) s.content_markdown = "text";
    m.sources.push_back(s);
  }
  if (rng() % 2) m.config.reliable_deny = {"spam.example"};
  if (rng() % 4 == 0) m.config.reliable_allow = {"good.example"};
  int claims = static_cast<int>(rng() % 15);
  for (int i = 0; i < claims; ++i) {
    Claim c;
    c.position = {i + 1, 1};
    c.claim_text = "c";
    c.claim_class = static_cast<ClaimType>(rng() % 6);
    EvidenceResolution r;
    r.claim_id = c.id();
    bool cites = c.claim_class != ClaimType::kF && (c.claim_class == ClaimType::kA || rng() % 3 != 0);
    if (cites) {
      for (int n = 1 + static_cast<int>(rng() % 3); n > 0; --n) r.valid_citations.insert(1 + static_cast<int>(rng() % (refs + 2)));
    }
    m.claims.push_back(c);
    m.resolutions.push_back(r);
    if (!is_verifiable(c.claim_class) && c.claim_class != ClaimType::kF) continue;
    VerificationRecord rec;
    rec.claim_id = c.id();
    rec.claim_class = c.claim_class;
    if (is_verifiable(c.claim_class)) rec.citations_checked = r.valid_citations;
    for (auto k : rec.citations_checked) {
      rec.per_citation_verdicts[k] = rng() % 2 ? Verdict::kSupported : Verdict::kNotSupported;
      if (rec.per_citation_verdicts[k] == Verdict::kSupported) rec.verdict = Verdict::kSupported;
    }
    m.records.push_back(rec);
  }
  return m;
}

struct OracleMetrics {
  std::optional<double> ext, cit, ref, repro, reliab, cv, ratio;
  long info = 0, citq = 0, refq = 0;
};

// Each formula evaluated literally from its definition.
inline OracleMetrics oracle_metrics(const MetricInstance& m) {
  using namespace reportcheck;
  OracleMetrics o;
  auto abc = [](ClaimType t) { return t == ClaimType::kA || t == ClaimType::kB || t == ClaimType::kC; };
  auto frac = [](double a, double b) -> std::optional<double> {
    if (b == 0) return std::nullopt;
    return a / b;
  };

  double n_abc = 0, n_sup = 0;
  for (const auto& c : m.claims) n_abc += abc(c.claim_class);
  for (const auto& r : m.records) n_sup += abc(r.claim_class) && r.verdict == Verdict::kSupported;
  o.ext = frac(n_sup, n_abc);

  double cites = 0, cites_sup = 0;
  std::set<int> sup_refs;
  for (const auto& r : m.records) {
    if (!abc(r.claim_class)) continue;
    for (int k : r.citations_checked) {
      cites += 1;
      if (r.per_citation_verdicts.at(k) == Verdict::kSupported) {
        cites_sup += 1;
        sup_refs.insert(k);
      }
    }
  }
  o.cit = frac(cites_sup, cites);

  double shown_sup = 0;
  for (const auto& [k, e] : m.doc.references) shown_sup += sup_refs.count(k);
  o.ref = frac(shown_sup, static_cast<double>(m.doc.references.size()));

  std::set<int> used;
  for (const auto& r : m.resolutions) used.insert(r.valid_citations.begin(), r.valid_citations.end());
  double err = 0, good = 0;
  std::vector<double> counts;
  for (int k : used) {
    const FetchedSource* src = nullptr;
    for (const auto& s : m.sources)
      if (s.key == k) src = &s;
    bool ok = src != nullptr && src->status == FetchStatus::kOk;
    if (!ok) err += 1;
    if (ok && sup_refs.count(k)) {
      std::string host = src->url.substr(8, src->url.find('/', 8) - 8);
      auto match = [&](const std::string& d) { return host == d || (host.size() > d.size() && host.substr(host.size() - d.size() - 1) == "." + d); };
      bool denied = false, allowed = m.config.reliable_allow.empty();
      for (const auto& d : m.config.reliable_deny) denied = denied || match(d);
      for (const auto& a : m.config.reliable_allow) allowed = allowed || match(a);
      if (!denied && allowed) good += 1;
    }
    double c = 0;
    for (const auto& r : m.resolutions) c += r.valid_citations.count(k);
    counts.push_back(c);
  }
  if (!used.empty()) o.repro = 1 - err / used.size();
  o.reliab = frac(good, static_cast<double>(used.size()));
  if (!counts.empty()) {
    double mu = 0;
    for (double c : counts) mu += c;
    mu /= counts.size();
    double var = 0;
    for (double c : counts) var += (c - mu) * (c - mu);
    var /= counts.size();
    if (mu != 0) o.cv = std::sqrt(var) / mu;
  }

  o.ratio = frac(n_abc, static_cast<double>(m.claims.size()));
  o.info = static_cast<long>(n_sup);
  o.citq = static_cast<long>(cites_sup);
  o.refq = static_cast<long>(sup_refs.size());
  return o;
}

inline bool same(std::optional<double> a, std::optional<double> b, double tol) {
  if (a.has_value() != b.has_value()) return false;
  return !a || std::fabs(*a - *b) <= tol;
}

// True when every metric matches the oracle within tol (undefined flags too).
inline bool metrics_match(const MetricInstance& m, double tol) {
  auto in = reportcheck::compute_integrity(m.claims, m.resolutions, m.records, m.doc, m.sources, m.config);
  auto su = reportcheck::compute_sufficiency(m.claims, m.records);
  auto o = oracle_metrics(m);
  return same(in.ext_claim_accuracy, o.ext, tol) && same(in.citation_accuracy, o.cit, tol) &&
         same(in.reference_accuracy, o.ref, tol) && same(in.reproducibility, o.repro, tol) &&
         same(in.reliability, o.reliab, tol) && same(in.diversity_cv, o.cv, tol) &&
         same(su.verifiable_ratio, o.ratio, tol) && su.info_qty == o.info && su.cit_qty == o.citq &&
         su.ref_qty == o.refq;
}

}  // namespace testsupport
