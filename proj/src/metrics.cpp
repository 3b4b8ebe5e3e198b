#include "reportcheck/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "reportcheck/error.hpp"
#include "reportcheck/text.hpp"

namespace reportcheck {

void validate_metrics_config(const MetricsConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::kConfig, std::string(name) + " must be positive");
  };
  positive(c.info_qty_threshold, "info_qty_threshold");
  positive(c.cit_qty_threshold, "cit_qty_threshold");
  positive(c.ref_qty_threshold, "ref_qty_threshold");
  positive(c.cv_cap, "cv_cap");
}

nlohmann::json to_json(const MetricsConfig& c) {
  return {{"info_qty_threshold", c.info_qty_threshold}, {"cit_qty_threshold", c.cit_qty_threshold},
          {"ref_qty_threshold", c.ref_qty_threshold},   {"cv_cap", c.cv_cap},
          {"reliable_allow", c.reliable_allow},         {"reliable_deny", c.reliable_deny}};
}

MetricsConfig metrics_config_from_json(const nlohmann::json& j) {
  MetricsConfig c;
  try {
    c.info_qty_threshold = j.value("info_qty_threshold", c.info_qty_threshold);
    c.cit_qty_threshold = j.value("cit_qty_threshold", c.cit_qty_threshold);
    c.ref_qty_threshold = j.value("ref_qty_threshold", c.ref_qty_threshold);
    c.cv_cap = j.value("cv_cap", c.cv_cap);
    c.reliable_allow = j.value("reliable_allow", c.reliable_allow);
    c.reliable_deny = j.value("reliable_deny", c.reliable_deny);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("metrics config: ") + e.what());
  }
  validate_metrics_config(c);
  return c;
}

namespace {

std::string host_of(const std::string& url) {
  auto scheme = url.find("://");
  std::size_t start = scheme == std::string::npos ? 0 : scheme + 3;
  auto end = url.find_first_of("/?#:", start);
  return to_lower(url.substr(start, end == std::string::npos ? std::string::npos : end - start));
}

bool host_matches(const std::string& host, const std::string& suffix) {
  std::string s = to_lower(suffix);
  if (host == s) return true;
  return host.size() > s.size() && host.ends_with(s) && host[host.size() - s.size() - 1] == '.';
}

MaybeValue ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

}  // namespace

bool is_reliable(const FetchedSource& source, const MetricsConfig& config) {
  if (!source.ok()) return false;
  std::string host = host_of(source.url);
  for (const auto& d : config.reliable_deny) {
    if (host_matches(host, d)) return false;
  }
  if (config.reliable_allow.empty()) return true;
  for (const auto& a : config.reliable_allow) {
    if (host_matches(host, a)) return true;
  }
  return false;
}

std::set<CitationKey> used_references(const std::vector<EvidenceResolution>& resolutions) {
  std::set<CitationKey> used;
  for (const auto& r : resolutions) used.insert(r.valid_citations.begin(), r.valid_citations.end());
  return used;
}

MaybeValue coefficient_of_variation(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (mean == 0.0) return std::nullopt;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return std::sqrt(var) / mean;
}

namespace {

std::set<CitationKey> supported_references(const std::vector<VerificationRecord>& records) {
  std::set<CitationKey> keys;
  for (const auto& r : records) {
    for (const auto& [key, v] : r.per_citation_verdicts) {
      if (v == Verdict::kSupported) keys.insert(key);
    }
  }
  return keys;
}

}  // namespace

IntegrityMetrics compute_integrity(const ClaimSet& claims, const std::vector<EvidenceResolution>& resolutions,
                                   const std::vector<VerificationRecord>& records, const ReportDocument& doc,
                                   const std::vector<FetchedSource>& sources, const MetricsConfig& config) {
  IntegrityMetrics m;
  double abc = 0, abc_supported = 0;
  for (const auto& c : claims) abc += is_verifiable(c.claim_class) ? 1 : 0;
  double citations = 0, citations_supported = 0;
  for (const auto& r : records) {
    if (!is_verifiable(r.claim_class)) continue;
    abc_supported += r.verdict == Verdict::kSupported ? 1 : 0;
    citations += static_cast<double>(r.citations_checked.size());
    for (auto key : r.citations_checked) {
      auto it = r.per_citation_verdicts.find(key);
      citations_supported += it != r.per_citation_verdicts.end() && it->second == Verdict::kSupported ? 1 : 0;
    }
  }
  m.ext_claim_accuracy = ratio(abc_supported, abc);
  m.citation_accuracy = ratio(citations_supported, citations);

  auto supported = supported_references(records);
  double shown = static_cast<double>(doc.references.size());
  double shown_supported = 0;
  for (const auto& [key, entry] : doc.references) shown_supported += supported.count(key) ? 1 : 0;
  m.reference_accuracy = ratio(shown_supported, shown);

  std::map<CitationKey, const FetchedSource*> by_key;
  for (const auto& s : sources) by_key[s.key] = &s;
  auto used = used_references(resolutions);
  double errors = 0, reliable_supported = 0;
  std::vector<double> counts;
  for (auto key : used) {
    auto it = by_key.find(key);
    bool ok = it != by_key.end() && it->second->ok();
    errors += ok ? 0 : 1;
    if (it != by_key.end() && is_reliable(*it->second, config) && supported.count(key)) reliable_supported += 1;
    double n = 0;
    for (const auto& r : resolutions) n += r.valid_citations.count(key) ? 1 : 0;
    counts.push_back(n);
  }
  auto u = static_cast<double>(used.size());
  if (u > 0) m.reproducibility = 1.0 - errors / u;
  m.reliability = ratio(reliable_supported, u);
  m.diversity_cv = coefficient_of_variation(counts);
  return m;
}

SufficiencyMetrics compute_sufficiency(const ClaimSet& claims, const std::vector<VerificationRecord>& records) {
  SufficiencyMetrics s;
  double abc = 0;
  for (const auto& c : claims) abc += is_verifiable(c.claim_class) ? 1 : 0;
  s.verifiable_ratio = ratio(abc, static_cast<double>(claims.size()));
  std::set<CitationKey> refs;
  for (const auto& r : records) {
    if (!is_verifiable(r.claim_class)) continue;
    s.info_qty += r.verdict == Verdict::kSupported ? 1 : 0;
    for (const auto& [key, v] : r.per_citation_verdicts) {
      if (v != Verdict::kSupported) continue;
      ++s.cit_qty;
      refs.insert(key);
    }
  }
  s.ref_qty = static_cast<long>(refs.size());
  return s;
}

InfoDimensionScores normalize_to_dimensions(const IntegrityMetrics& in, const SufficiencyMetrics& su,
                                            const MetricsConfig& config) {
  validate_metrics_config(config);
  auto linear = [](MaybeValue r) -> MaybeValue {
    if (!r) return std::nullopt;
    return 1.0 + 9.0 * std::clamp(*r, 0.0, 1.0);
  };
  auto saturating = [](double count, double threshold) -> MaybeValue {
    return 1.0 + 9.0 * std::min(count / threshold, 1.0);
  };
  InfoDimensionScores out;
  out.components["ext_claim_accuracy"] = linear(in.ext_claim_accuracy);
  out.components["citation_accuracy"] = linear(in.citation_accuracy);
  out.components["reference_accuracy"] = linear(in.reference_accuracy);
  out.components["reproducibility"] = linear(in.reproducibility);
  out.components["reliability"] = linear(in.reliability);
  out.components["diversity"] =
      in.diversity_cv ? MaybeValue(1.0 + 9.0 * (1.0 - std::min(*in.diversity_cv / config.cv_cap, 1.0))) : std::nullopt;
  out.components["verifiable_ratio"] = linear(su.verifiable_ratio);
  out.components["info_qty"] = saturating(static_cast<double>(su.info_qty), config.info_qty_threshold);
  out.components["cit_qty"] = saturating(static_cast<double>(su.cit_qty), config.cit_qty_threshold);
  out.components["ref_qty"] = saturating(static_cast<double>(su.ref_qty), config.ref_qty_threshold);

  auto mean_of = [&](std::initializer_list<const char*> names) -> MaybeValue {
    double sum = 0;
    int n = 0;
    for (const char* name : names) {
      if (const auto& v = out.components[name]) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
  };
  out.information_integrity = mean_of(
      {"ext_claim_accuracy", "citation_accuracy", "reference_accuracy", "reproducibility", "reliability", "diversity"});
  out.information_sufficiency = mean_of({"verifiable_ratio", "info_qty", "cit_qty", "ref_qty"});
  return out;
}

namespace {

nlohmann::json maybe(MaybeValue v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json undefined_list(std::initializer_list<std::pair<const char*, MaybeValue>> fields) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [name, v] : fields) {
    if (!v) out.push_back(name);
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const IntegrityMetrics& m) {
  return {{"ext_claim_accuracy", maybe(m.ext_claim_accuracy)},
          {"citation_accuracy", maybe(m.citation_accuracy)},
          {"reference_accuracy", maybe(m.reference_accuracy)},
          {"reproducibility", maybe(m.reproducibility)},
          {"reliability", maybe(m.reliability)},
          {"diversity_cv", maybe(m.diversity_cv)},
          {"undefined", undefined_list({{"ext_claim_accuracy", m.ext_claim_accuracy},
                                        {"citation_accuracy", m.citation_accuracy},
                                        {"reference_accuracy", m.reference_accuracy},
                                        {"reproducibility", m.reproducibility},
                                        {"reliability", m.reliability},
                                        {"diversity_cv", m.diversity_cv}})}};
}

nlohmann::json to_json(const SufficiencyMetrics& m) {
  return {{"verifiable_ratio", maybe(m.verifiable_ratio)},
          {"info_qty", m.info_qty},
          {"cit_qty", m.cit_qty},
          {"ref_qty", m.ref_qty},
          {"undefined", undefined_list({{"verifiable_ratio", m.verifiable_ratio}})}};
}

nlohmann::json to_json(const InfoDimensionScores& s) {
  nlohmann::json components = nlohmann::json::object();
  for (const auto& [name, v] : s.components) components[name] = maybe(v);
  return {{"information_integrity", maybe(s.information_integrity)},
          {"information_sufficiency", maybe(s.information_sufficiency)},
          {"components", components}};
}

}  // namespace reportcheck
