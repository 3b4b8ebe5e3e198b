#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "reportcheck/rubric.hpp"

namespace testsupport {

// Random 4-level hierarchy; dimension 1 sometimes draws from metrics.
inline reportcheck::Taxonomy random_taxonomy(std::mt19937& rng) {
  using namespace reportcheck;
  Taxonomy t;
  int dims = 1 + static_cast<int>(rng() % 7);
  for (int d = 1; d <= dims; ++d) {
    Dimension dim;
    dim.id = std::to_string(d);
    dim.name = "D" + dim.id;
    int crits = 1 + static_cast<int>(rng() % 4);
    for (int c = 1; c <= crits; ++c) {
      Criterion cr;
      cr.id = dim.id + "." + std::to_string(c);
      cr.name = "C" + cr.id;
      int els = 1 + static_cast<int>(rng() % 4);
      for (int e = 1; e <= els; ++e) {
        Element el;
        el.id = cr.id + "." + std::to_string(e);
        el.name = "E" + el.id;
        int facs = 1 + static_cast<int>(rng() % 5);
        for (int f = 1; f <= facs; ++f) {
          Factor fa;
          fa.id = el.id + "." + std::to_string(f);
          fa.aspect = rng() % 2 ? Aspect::kCoverage : Aspect::kQuality;
          fa.prompt_text = "factor " + fa.id;
          el.factors.push_back(fa);
        }
        cr.elements.push_back(el);
      }
      dim.criteria.push_back(cr);
    }
    t.dimensions.push_back(dim);
  }
  return t;
}

// One score per factor; about na_share of them NA, some factors left out.
inline std::vector<reportcheck::FactorScore> random_scores(const reportcheck::Taxonomy& t, std::mt19937& rng,
                                                           double na_share = 0.3) {
  std::vector<reportcheck::FactorScore> out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& d : t.dimensions)
    for (const auto& c : d.criteria)
      for (const auto& e : c.elements)
        for (const auto& f : e.factors) {
          if (u(rng) < 0.05) continue;
          reportcheck::FactorScore s;
          s.factor_id = f.id;
          if (u(rng) >= na_share) {
            s.score = 1 + static_cast<int>(rng() % 10);
            s.rationale = "r";
          }
          out.push_back(s);
        }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// Literal recursive evaluation: each level is the plain average of the
// defined values one level down.
struct OracleAggregate {
  std::map<std::string, std::optional<double>> coverage, quality, element, criterion, dimension;
  std::optional<double> overall;
};

inline std::optional<double> oracle_avg(const std::vector<std::optional<double>>& xs) {
  std::vector<double> defined;
  for (const auto& x : xs)
    if (x.has_value()) defined.push_back(*x);
  if (defined.empty()) return std::nullopt;
  return std::accumulate(defined.begin(), defined.end(), 0.0) / static_cast<double>(defined.size());
}

inline OracleAggregate oracle_aggregate(const reportcheck::Taxonomy& t,
                                        const std::vector<reportcheck::FactorScore>& scores) {
  std::map<std::string, std::optional<double>> s;
  for (const auto& fs : scores)
    s[fs.factor_id] = fs.score ? std::optional<double>(*fs.score) : std::nullopt;
  OracleAggregate o;
  std::vector<std::optional<double>> dims;
  for (const auto& d : t.dimensions) {
    std::vector<std::optional<double>> crits;
    for (const auto& c : d.criteria) {
      std::vector<std::optional<double>> els;
      for (const auto& e : c.elements) {
        std::vector<std::optional<double>> cov, qual;
        for (const auto& f : e.factors) {
          auto v = s.count(f.id) ? s[f.id] : std::nullopt;
          (f.aspect == reportcheck::Aspect::kCoverage ? cov : qual).push_back(v);
        }
        o.coverage[e.id] = oracle_avg(cov);
        o.quality[e.id] = oracle_avg(qual);
        o.element[e.id] = oracle_avg({o.coverage[e.id], o.quality[e.id]});
        els.push_back(o.element[e.id]);
      }
      o.criterion[c.id] = oracle_avg(els);
      crits.push_back(o.criterion[c.id]);
    }
    o.dimension[d.id] = oracle_avg(crits);
    dims.push_back(o.dimension[d.id]);
  }
  o.overall = oracle_avg(dims);
  return o;
}

inline bool close_or_both_na(const std::optional<double>& a, const std::optional<double>& b, double tol) {
  if (a.has_value() != b.has_value()) return false;
  return !a || std::abs(*a - *b) <= tol;
}

inline bool aggregate_matches(const reportcheck::AggregateScores& got, const OracleAggregate& want, double tol) {
  for (const auto& [id, v] : want.element) {
    auto it = got.per_element.find(id);
    if (it == got.per_element.end()) return false;
    if (!close_or_both_na(it->second.coverage, want.coverage.at(id), tol) ||
        !close_or_both_na(it->second.quality, want.quality.at(id), tol) ||
        !close_or_both_na(it->second.combined, v, tol)) {
      return false;
    }
  }
  for (const auto& [id, v] : want.criterion)
    if (!got.per_criterion.count(id) || !close_or_both_na(got.per_criterion.at(id), v, tol)) return false;
  for (const auto& [id, v] : want.dimension)
    if (!got.per_dimension.count(id) || !close_or_both_na(got.per_dimension.at(id), v, tol)) return false;
  return close_or_both_na(got.overall, want.overall, tol);
}

}  // namespace testsupport
