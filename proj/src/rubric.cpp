#include "reportcheck/rubric.hpp"

#include <algorithm>
#include <set>

#include "reportcheck/error.hpp"
#include "reportcheck/text.hpp"

namespace reportcheck {

std::string_view aspect_name(Aspect aspect) { return aspect == Aspect::kCoverage ? "Coverage" : "Quality"; }

std::optional<Aspect> parse_aspect(std::string_view name) {
  name = trim(name);
  if (iequals(name, "Coverage") || iequals(name, "C")) return Aspect::kCoverage;
  if (iequals(name, "Quality") || iequals(name, "Q")) return Aspect::kQuality;
  return std::nullopt;
}

TaxonomyCounts Taxonomy::counts() const {
  TaxonomyCounts c;
  c.dimensions = static_cast<int>(dimensions.size());
  for (const auto& d : dimensions) {
    c.criteria += static_cast<int>(d.criteria.size());
    for (const auto& cr : d.criteria) {
      c.elements += static_cast<int>(cr.elements.size());
      for (const auto& e : cr.elements) c.factors += static_cast<int>(e.factors.size());
    }
  }
  return c;
}

const Factor* Taxonomy::find_factor(std::string_view id) const {
  for (const auto& d : dimensions)
    for (const auto& c : d.criteria)
      for (const auto& e : c.elements)
        for (const auto& f : e.factors)
          if (f.id == id) return &f;
  return nullptr;
}

void validate_taxonomy(const Taxonomy& t) {
  auto fail = [](const std::string& node, const std::string& why) {
    throw Error(ErrorCode::kSchemaViolation, node + ": " + why);
  };
  if (t.dimensions.empty()) fail("taxonomy", "no dimensions");
  std::set<std::string> ids;
  auto claim_id = [&](const std::string& kind, const std::string& id) {
    if (trim(id).empty()) fail(kind, "empty id");
    if (!ids.insert(id).second) fail(kind + " " + id, "duplicate id");
  };
  for (const auto& d : t.dimensions) {
    claim_id("dimension", d.id);
    if (d.criteria.empty()) fail("dimension " + d.id, "no criteria");
    for (const auto& c : d.criteria) {
      claim_id("criterion", c.id);
      if (c.elements.empty()) fail("criterion " + c.id, "no elements");
      for (const auto& e : c.elements) {
        claim_id("element", e.id);
        if (e.factors.empty()) fail("element " + e.id, "no factors");
        for (const auto& f : e.factors) {
          claim_id("factor", f.id);
          if (trim(f.prompt_text).empty()) fail("factor " + f.id, "empty prompt_text");
        }
      }
    }
  }
}

namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* key, const std::string& node) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::kSchemaViolation, node + ": missing field " + key);
  }
  return j.at(key);
}

std::string string_field(const nlohmann::json& j, const char* key, const std::string& node) {
  const auto& v = field(j, key, node);
  if (!v.is_string()) throw Error(ErrorCode::kSchemaViolation, node + ": " + key + " must be a string");
  return v.get<std::string>();
}

const nlohmann::json& list_field(const nlohmann::json& j, const char* key, const std::string& node) {
  const auto& v = field(j, key, node);
  if (!v.is_array()) throw Error(ErrorCode::kSchemaViolation, node + ": " + key + " must be a list");
  return v;
}

void check_expected(const nlohmann::json& j, const char* key, std::size_t actual, const std::string& node) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number_integer()) {
    throw Error(ErrorCode::kSchemaViolation, node + ": " + key + " must be an integer");
  }
  auto expected = j.at(key).get<long long>();
  if (expected != static_cast<long long>(actual)) {
    throw Error(ErrorCode::kCountMismatch, node + ": expected " + std::to_string(expected) + " " +
                                               std::string(key).substr(9) + ", found " + std::to_string(actual));
  }
}

std::string node_name(const char* kind, const nlohmann::json& j, std::size_t pos) {
  if (j.is_object() && j.contains("id") && j.at("id").is_string()) {
    return std::string(kind) + " " + j.at("id").get<std::string>();
  }
  return std::string(kind) + " #" + std::to_string(pos + 1);
}

}  // namespace

Taxonomy taxonomy_from_json(const nlohmann::json& j) {
  Taxonomy t;
  const auto& dims = list_field(j, "dimensions", "taxonomy");
  for (std::size_t di = 0; di < dims.size(); ++di) {
    const auto& dj = dims[di];
    std::string dnode = node_name("dimension", dj, di);
    Dimension d;
    d.id = string_field(dj, "id", dnode);
    d.name = string_field(dj, "name", dnode);
    d.short_name = dj.contains("short_name") ? string_field(dj, "short_name", dnode) : "";
    std::string source = dj.value("source", std::string("judge"));
    if (source == "judge") {
      d.source = DimensionSource::kJudge;
    } else if (source == "metrics") {
      d.source = DimensionSource::kMetrics;
    } else {
      throw Error(ErrorCode::kSchemaViolation, dnode + ": unknown source \"" + source + "\"");
    }
    const auto& crits = list_field(dj, "criteria", dnode);
    for (std::size_t ci = 0; ci < crits.size(); ++ci) {
      const auto& cj = crits[ci];
      std::string cnode = node_name("criterion", cj, ci);
      Criterion c;
      c.id = string_field(cj, "id", cnode);
      c.name = string_field(cj, "name", cnode);
      if (cj.contains("metric") && !cj.at("metric").is_null()) {
        if (!cj.at("metric").is_string()) throw Error(ErrorCode::kSchemaViolation, cnode + ": metric must be a string");
        c.metric = cj.at("metric").get<std::string>();
      }
      const auto& els = list_field(cj, "elements", cnode);
      for (std::size_t ei = 0; ei < els.size(); ++ei) {
        const auto& ej = els[ei];
        std::string enode = node_name("element", ej, ei);
        Element e;
        e.id = string_field(ej, "id", enode);
        e.name = string_field(ej, "name", enode);
        e.description = ej.contains("description") ? string_field(ej, "description", enode) : "";
        const auto& facs = list_field(ej, "factors", enode);
        for (std::size_t fi = 0; fi < facs.size(); ++fi) {
          const auto& fj = facs[fi];
          std::string fnode = node_name("factor", fj, fi);
          Factor f;
          f.id = string_field(fj, "id", fnode);
          std::string aspect = string_field(fj, "aspect", fnode);
          auto a = parse_aspect(aspect);
          if (!a) throw Error(ErrorCode::kSchemaViolation, fnode + ": aspect \"" + aspect + "\" is not Coverage or Quality");
          f.aspect = *a;
          f.prompt_text = string_field(fj, "prompt_text", fnode);
          e.factors.push_back(std::move(f));
        }
        check_expected(ej, "expected_factors", e.factors.size(), enode);
        c.elements.push_back(std::move(e));
      }
      check_expected(cj, "expected_elements", c.elements.size(), cnode);
      d.criteria.push_back(std::move(c));
    }
    check_expected(dj, "expected_criteria", d.criteria.size(), dnode);
    t.dimensions.push_back(std::move(d));
  }
  validate_taxonomy(t);

  if (j.contains("declared_counts")) {
    const auto& dc = j.at("declared_counts");
    auto actual = t.counts();
    std::pair<const char*, int> levels[] = {{"dimensions", actual.dimensions},
                                            {"criteria", actual.criteria},
                                            {"elements", actual.elements},
                                            {"factors", actual.factors}};
    for (const auto& [name, have] : levels) {
      if (!dc.contains(name)) continue;
      if (!dc.at(name).is_number_integer()) {
        throw Error(ErrorCode::kSchemaViolation, std::string("declared_counts.") + name + " must be an integer");
      }
      if (dc.at(name).get<int>() != have) {
        throw Error(ErrorCode::kCountMismatch, std::string("taxonomy: declared ") + std::to_string(dc.at(name).get<int>()) +
                                                   " " + name + ", found " + std::to_string(have));
      }
    }
  }
  return t;
}

nlohmann::json to_json(const Taxonomy& t) {
  auto c = t.counts();
  nlohmann::json out = {{"version", 1},
                        {"declared_counts",
                         {{"dimensions", c.dimensions}, {"criteria", c.criteria}, {"elements", c.elements}, {"factors", c.factors}}},
                        {"dimensions", nlohmann::json::array()}};
  for (const auto& d : t.dimensions) {
    nlohmann::json dj = {{"id", d.id},
                         {"name", d.name},
                         {"short_name", d.short_name},
                         {"source", d.source == DimensionSource::kJudge ? "judge" : "metrics"},
                         {"expected_criteria", d.criteria.size()},
                         {"criteria", nlohmann::json::array()}};
    for (const auto& cr : d.criteria) {
      nlohmann::json cj = {{"id", cr.id},
                           {"name", cr.name},
                           {"metric", cr.metric ? nlohmann::json(*cr.metric) : nlohmann::json(nullptr)},
                           {"expected_elements", cr.elements.size()},
                           {"elements", nlohmann::json::array()}};
      for (const auto& e : cr.elements) {
        nlohmann::json ej = {{"id", e.id},
                             {"name", e.name},
                             {"description", e.description},
                             {"expected_factors", e.factors.size()},
                             {"factors", nlohmann::json::array()}};
        for (const auto& f : e.factors) {
          ej["factors"].push_back({{"id", f.id}, {"aspect", aspect_name(f.aspect)}, {"prompt_text", f.prompt_text}});
        }
        cj["elements"].push_back(std::move(ej));
      }
      dj["criteria"].push_back(std::move(cj));
    }
    out["dimensions"].push_back(std::move(dj));
  }
  return out;
}

Taxonomy load_taxonomy(const std::string& path) {
  std::string text = read_file(path);
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kSchemaViolation, path + ": not valid JSON");
  try {
    return taxonomy_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, path + ": " + e.what());
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.detail());
  }
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const FactorScore& s) {
  return {{"factor_id", s.factor_id},
          {"score", s.score ? nlohmann::json(*s.score) : nlohmann::json("NA")},
          {"rationale", s.rationale}};
}

namespace {

bool is_na_token(std::string_view s) {
  s = trim(s);
  return iequals(s, "NA") || iequals(s, "N/A") || iequals(s, "N.A.") || iequals(s, "not applicable");
}

// Error(kMalformedOutput) unless v is NA or an integer 1-10.
std::optional<int> parse_score_value(const nlohmann::json& v, const std::string& id) {
  auto bad = [&]() { return Error(ErrorCode::kMalformedOutput, id + ": score must be an integer 1-10 or \"NA\""); };
  if (v.is_null()) return std::nullopt;
  long long n = 0;
  if (v.is_number_integer()) {
    n = v.get<long long>();
  } else if (v.is_number_float()) {
    double d = v.get<double>();
    if (d != static_cast<double>(static_cast<long long>(d))) throw bad();
    n = static_cast<long long>(d);
  } else if (v.is_string()) {
    std::string s(trim(v.get<std::string>()));
    if (is_na_token(s)) return std::nullopt;
    if (s.empty() || s.size() > 3 || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw bad();
    }
    n = std::stoll(s);
  } else {
    throw bad();
  }
  if (n < 1 || n > 10) {
    throw Error(ErrorCode::kMalformedOutput, id + ": score " + std::to_string(n) + " is outside 1-10");
  }
  return static_cast<int>(n);
}

}  // namespace

FactorScore factor_score_from_json(const nlohmann::json& j) {
  try {
    FactorScore s;
    s.factor_id = j.at("factor_id").get<std::string>();
    s.rationale = j.value("rationale", std::string());
    s.score = parse_score_value(j.contains("score") ? j.at("score") : nlohmann::json(), s.factor_id);
    if (s.score && trim(s.rationale).empty()) {
      throw Error(ErrorCode::kSchemaViolation, s.factor_id + ": scored factor without rationale");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("factor score json: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kSchemaViolation, e.detail());
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kJudgeSystem =
    R"(You are an expert reviewer of long-form research reports. You score a report
against a rubric. Each rubric factor is tagged Coverage or Quality.

Coverage asks whether everything the factor requires is present anywhere in
the report. Quality asks how well the parts that are present are written,
judged against professional report standards.

Score every factor on a 1-10 integer scale using these bands:

| Score | Coverage | Quality |
|---|---|---|
| 9–10 (Perfect) | Fully meets all requirements; No omissions; No revision needed | Excellent quality in all relevant aspects; No revision needed — Top-tier international journal level, or high-end professional report meeting or exceeding standards in specific technical/industrial contexts |
| 7–8 (Excellent) | Meets almost all requirements; Only 1–2 minor omissions, minimal impact | High quality; Meets most academic/professional standards, only minor improvements possible — Solid peer-reviewed journal, excellent doctoral research, high-quality industry report level |
| 5–6 (Good) | Meets more than half; Meets most key requirements, minor elements missing | Meets essential professional standards; Clear structure and competent analysis but room for improvement — Well-written master's thesis or standard professional report level |
| 3–4 (Inadequate) | Partially meets; Several key omissions | Noticeable flaws in several aspects; Significant revision needed — Undergraduate thesis or entry-level professional report level |
| 1–2 (Poor) | Most requirements are missing or treated only superficially | Fails to meet basic professional standards; Lacks depth, rigor, accuracy — Below undergraduate level; Unsuitable for publication or professional use |

Use "NA" only when a factor cannot apply to this task at all.

Answer with one JSON object and nothing else:
{"scores": [{"factor_id": "1.1.1.1", "rationale": "...", "score": 7}]}
Give exactly one entry per factor id in the rubric. "score" is an integer from
1 to 10, or the string "NA". Write the rationale before deciding the score.)";

}  // namespace

ModelRequest build_judge_request(const JudgeInput& input, const Dimension& dimension, const JudgeOptions& options) {
  std::string user = "# Task Query\n" + std::string(trim(input.task_query)) + "\n\n";
  if (input.expert_guidance && !trim(*input.expert_guidance).empty()) {
    user += "# Expert Evaluation Guidance\n" + std::string(trim(*input.expert_guidance)) + "\n\n";
  }
  user += "# Report to Evaluate\n" + std::string(trim(input.report)) + "\n\n";
  user += "# Rubric: " + dimension.id + " " + dimension.name + "\n";
  for (const auto& c : dimension.criteria) {
    user += "\n## " + c.id + " " + c.name + "\n";
    for (const auto& e : c.elements) {
      user += "\n### " + e.id + " " + e.name + "\n";
      if (!e.description.empty()) user += e.description + "\n";
      for (const auto& f : e.factors) {
        user += "- " + f.id + " [" + std::string(aspect_name(f.aspect)) + "] " + f.prompt_text + "\n";
      }
    }
  }
  user += "\nScore every factor listed under this rubric.";
  if (options.rationale_sentences) {
    user += " Keep each rationale to about " + std::to_string(*options.rationale_sentences) + " sentences.";
  }
  ModelRequest request;
  request.model = input.judge_model_id;
  request.system_text = std::string(kJudgeSystem);
  request.user_text = std::move(user);
  request.expected_schema = std::string(kJudgeSchemaId);
  request.max_output_tokens = options.max_output_tokens;
  return request;
}

ParsedJudgeResponse parse_judge_response(std::string_view text, const Dimension& dimension) {
  nlohmann::json j = parse_model_json(text);
  const nlohmann::json* list = nullptr;
  if (j.is_array()) {
    list = &j;
  } else if (j.is_object() && j.contains("scores")) {
    list = &j["scores"];
  }
  if (list == nullptr || !list->is_array()) {
    throw Error(ErrorCode::kMalformedOutput, "expected a \"scores\" array");
  }
  std::vector<const Factor*> expected;
  for (const auto& c : dimension.criteria)
    for (const auto& e : c.elements)
      for (const auto& f : e.factors) expected.push_back(&f);

  std::map<std::string, FactorScore> got;
  for (const auto& item : *list) {
    if (!item.is_object() || !item.contains("factor_id") || !item.at("factor_id").is_string()) {
      throw Error(ErrorCode::kMalformedOutput, "score entry without a string factor_id");
    }
    FactorScore s;
    s.factor_id = std::string(trim(item.at("factor_id").get<std::string>()));
    if (std::none_of(expected.begin(), expected.end(), [&](const Factor* f) { return f->id == s.factor_id; })) {
      throw Error(ErrorCode::kMalformedOutput, "unknown factor id " + s.factor_id);
    }
    if (got.count(s.factor_id)) throw Error(ErrorCode::kMalformedOutput, "duplicate factor id " + s.factor_id);
    if (item.contains("rationale")) {
      if (!item.at("rationale").is_string()) {
        throw Error(ErrorCode::kMalformedOutput, s.factor_id + ": rationale must be a string");
      }
      s.rationale = item.at("rationale").get<std::string>();
    }
    s.score = parse_score_value(item.contains("score") ? item.at("score") : nlohmann::json(), s.factor_id);
    if (s.score && trim(s.rationale).empty()) {
      throw Error(ErrorCode::kMalformedOutput, s.factor_id + ": scored without a rationale");
    }
    got.emplace(s.factor_id, std::move(s));
  }
  ParsedJudgeResponse out;
  for (const Factor* f : expected) {
    auto it = got.find(f->id);
    if (it == got.end()) {
      out.missing_ids.push_back(f->id);
    } else {
      out.scores.push_back(std::move(it->second));
    }
  }
  return out;
}

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ", ") + id;
  return out;
}

std::vector<FactorScore> judge_dimension(const JudgeInput& input, const Dimension& dimension, Gateway& gw,
                                         const JudgeOptions& options) {
  ModelRequest request = build_judge_request(input, dimension, options);
  const std::string original = request.user_text;
  std::map<std::string, FactorScore> collected;
  for (int attempt = 0;; ++attempt) {
    ModelResponse response = gw.complete(request, "judge");
    std::string problem;
    std::vector<std::string> missing;
    try {
      auto parsed = parse_judge_response(response.text, dimension);
      for (auto& s : parsed.scores) collected[s.factor_id] = std::move(s);
      for (const auto& id : parsed.missing_ids) {
        if (!collected.count(id)) missing.push_back(id);
      }
      if (missing.empty()) break;
      problem = "missing scores for " + join_ids(missing);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kMalformedOutput) throw;
      problem = e.detail();
    }
    if (attempt >= options.retry_budget) {
      if (!missing.empty()) throw Error(ErrorCode::kIncompleteScores, join_ids(missing));
      throw Error(ErrorCode::kMalformedOutput, problem + " (after " + std::to_string(attempt) + " re-asks)");
    }
    request.user_text = original + "\n\nYour previous answer was rejected: " + problem +
                        ". Reply again with only the JSON object in the required format.";
  }
  std::vector<FactorScore> out;
  for (const auto& c : dimension.criteria)
    for (const auto& e : c.elements)
      for (const auto& f : e.factors) out.push_back(collected.at(f.id));
  return out;
}

}  // namespace

std::vector<FactorScore> judge_report(const JudgeInput& input, Gateway& gw, const JudgeOptions& options) {
  if (input.taxonomy == nullptr) throw Error(ErrorCode::kInvalidArgument, "judge input without taxonomy");
  if (trim(input.task_query).empty()) throw Error(ErrorCode::kInvalidArgument, "empty task query");
  if (trim(input.report).empty()) throw Error(ErrorCode::kInvalidArgument, "empty report");
  if (trim(input.judge_model_id).empty()) throw Error(ErrorCode::kInvalidArgument, "empty judge model id");
  std::vector<const Dimension*> judged;
  for (const auto& d : input.taxonomy->dimensions) {
    if (d.source == DimensionSource::kJudge) judged.push_back(&d);
  }
  std::vector<std::vector<FactorScore>> per_dim(judged.size());
  parallel_for(judged.size(), static_cast<std::size_t>(std::max(1, options.max_in_flight)), [&](std::size_t i) {
    try {
      per_dim[i] = judge_dimension(input, *judged[i], gw, options);
    } catch (const Error& e) {
      throw Error(e.code(), "dimension " + judged[i]->id + ": " + e.detail());
    }
  });
  std::vector<FactorScore> out;
  for (auto& v : per_dim) out.insert(out.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

MaybeValue mean_defined(const std::vector<MaybeValue>& values) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

AggregateScores aggregate(const std::vector<FactorScore>& scores, const Taxonomy& taxonomy,
                          const InfoDimensionScores* info, const AggregateOptions& options) {
  std::map<std::string, std::optional<int>> by_id;
  for (const auto& s : scores) {
    if (taxonomy.find_factor(s.factor_id) == nullptr) throw Error(ErrorCode::kUnknownFactorId, s.factor_id);
    if (s.score && (*s.score < 1 || *s.score > 10)) {
      throw Error(ErrorCode::kInvalidArgument, s.factor_id + ": score outside 1-10");
    }
    if (!by_id.emplace(s.factor_id, s.score).second) {
      throw Error(ErrorCode::kInvalidArgument, "factor " + s.factor_id + " scored twice");
    }
  }
  for (const auto& [dim, w] : options.dimension_weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::kConfig, "negative weight for dimension " + dim);
  }

  AggregateScores out;
  double weighted = 0.0, weight_total = 0.0;
  for (const auto& d : taxonomy.dimensions) {
    std::vector<MaybeValue> crit_values;
    for (const auto& c : d.criteria) {
      std::vector<MaybeValue> element_values;
      for (const auto& e : c.elements) {
        std::vector<MaybeValue> cov, qual;
        for (const auto& f : e.factors) {
          auto it = by_id.find(f.id);
          MaybeValue v;
          if (it != by_id.end() && it->second) v = static_cast<double>(*it->second);
          (f.aspect == Aspect::kCoverage ? cov : qual).push_back(v);
        }
        ElementAggregate agg;
        agg.coverage = mean_defined(cov);
        agg.quality = mean_defined(qual);
        agg.combined = mean_defined({agg.coverage, agg.quality});
        element_values.push_back(agg.combined);
        out.per_element[e.id] = agg;
      }
      MaybeValue cv;
      if (info != nullptr && d.source == DimensionSource::kMetrics && c.metric) {
        auto it = info->components.find(*c.metric);
        if (it != info->components.end()) cv = it->second;
      } else {
        cv = mean_defined(element_values);
      }
      out.per_criterion[c.id] = cv;
      crit_values.push_back(cv);
    }
    MaybeValue dv = mean_defined(crit_values);
    out.per_dimension[d.id] = dv;
    if (dv) {
      auto w = options.dimension_weights.find(d.id);
      double weight = w == options.dimension_weights.end() ? 1.0 : w->second;
      weighted += weight * *dv;
      weight_total += weight;
    }
  }
  if (weight_total > 0.0) out.overall = weighted / weight_total;
  return out;
}

nlohmann::json to_json(const AggregateScores& s, const Taxonomy& taxonomy) {
  auto value = [](const MaybeValue& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json out = {{"overall", value(s.overall)},
                        {"dimensions", nlohmann::json::object()},
                        {"criteria", nlohmann::json::object()},
                        {"elements", nlohmann::json::object()}};
  for (const auto& d : taxonomy.dimensions) {
    auto dv = s.per_dimension.find(d.id);
    out["dimensions"][d.id] = {{"name", d.name}, {"score", dv == s.per_dimension.end() ? nullptr : value(dv->second)}};
    for (const auto& c : d.criteria) {
      auto cv = s.per_criterion.find(c.id);
      out["criteria"][c.id] = {{"name", c.name}, {"score", cv == s.per_criterion.end() ? nullptr : value(cv->second)}};
      for (const auto& e : c.elements) {
        auto ev = s.per_element.find(e.id);
        if (ev == s.per_element.end()) continue;
        out["elements"][e.id] = {{"coverage", value(ev->second.coverage)},
                                 {"quality", value(ev->second.quality)},
                                 {"combined", value(ev->second.combined)}};
      }
    }
  }
  return out;
}

}  // namespace reportcheck
