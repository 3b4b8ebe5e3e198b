#include "reportcheck/verify.hpp"

#include <algorithm>
#include <unordered_map>

#include "reportcheck/error.hpp"
#include "reportcheck/text.hpp"

namespace reportcheck {

std::string_view verdict_name(Verdict v) { return v == Verdict::kSupported ? "Supported" : "NotSupported"; }

std::optional<Verdict> parse_verdict(std::string_view name) {
  std::string squeezed;
  for (char c : trim(name)) {
    if (c != ' ' && c != '_' && c != '-') squeezed.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (squeezed == "supported") return Verdict::kSupported;
  if (squeezed == "notsupported" || squeezed == "unsupported") return Verdict::kNotSupported;
  return std::nullopt;
}

nlohmann::json to_json(const VerificationRecord& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [key, v] : r.per_citation_verdicts) per[std::to_string(key)] = verdict_name(v);
  return {{"claim_id", r.claim_id.str()},
          {"claim_class", std::string(1, claim_type_letter(r.claim_class))},
          {"verdict", verdict_name(r.verdict)},
          {"rationale", r.rationale},
          {"citations_checked", r.citations_checked},
          {"per_citation_verdicts", per},
          {"context_hashes", r.context_hashes},
          {"cost_usd", r.cost_usd}};
}

VerificationRecord verification_record_from_json(const nlohmann::json& j) {
  try {
    VerificationRecord r;
    auto id = ClaimId::parse(j.at("claim_id").get<std::string>());
    auto cls = parse_claim_type(j.at("claim_class").get<std::string>());
    auto verdict = parse_verdict(j.at("verdict").get<std::string>());
    if (!id || !cls || !verdict) throw Error(ErrorCode::kSchemaViolation, "bad verification record");
    r.claim_id = *id;
    r.claim_class = *cls;
    r.verdict = *verdict;
    r.rationale = j.at("rationale").get<std::string>();
    r.citations_checked = j.at("citations_checked").get<std::set<CitationKey>>();
    for (const auto& [key, v] : j.at("per_citation_verdicts").items()) {
      auto pv = parse_verdict(v.get<std::string>());
      if (!pv) throw Error(ErrorCode::kSchemaViolation, "bad per-citation verdict");
      r.per_citation_verdicts[std::stoi(key)] = *pv;
    }
    r.context_hashes = j.at("context_hashes").get<std::vector<std::string>>();
    r.cost_usd = j.value("cost_usd", 0.0);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("verification json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

std::vector<VerificationGroup> group_claims(const ClaimSet& claims, const std::vector<EvidenceResolution>& resolutions,
                                            int group_size) {
  if (group_size < 1) throw Error(ErrorCode::kInvalidArgument, "group_size must be >= 1");
  if (claims.size() != resolutions.size()) {
    throw Error(ErrorCode::kInvalidArgument, "claims and resolutions differ in length");
  }
  auto cap = static_cast<std::size_t>(group_size);
  std::vector<CitationKey> bucket_order;
  std::map<CitationKey, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < claims.size(); ++i) {
    if (!is_verifiable(claims[i].claim_class) || resolutions[i].valid_citations.empty()) continue;
    CitationKey primary = *resolutions[i].valid_citations.begin();
    if (!buckets.count(primary)) bucket_order.push_back(primary);
    buckets[primary].push_back(i);
  }
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::vector<std::size_t>> fragments;
  for (auto key : bucket_order) {
    const auto& members = buckets[key];
    std::size_t full = members.size() / cap * cap;
    for (std::size_t s = 0; s < full; s += cap) groups.emplace_back(members.begin() + s, members.begin() + s + cap);
    if (full < members.size()) fragments.emplace_back(members.begin() + full, members.end());
  }
  std::vector<std::vector<std::size_t>> shared;
  for (auto& frag : fragments) {
    auto bin = std::find_if(shared.begin(), shared.end(),
                            [&](const auto& b) { return b.size() + frag.size() <= cap; });
    if (bin == shared.end()) {
      shared.push_back(frag);
    } else {
      bin->insert(bin->end(), frag.begin(), frag.end());
    }
  }
  groups.insert(groups.end(), shared.begin(), shared.end());
  for (auto& g : groups) std::sort(g.begin(), g.end());
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });

  std::vector<VerificationGroup> out;
  for (const auto& g : groups) {
    VerificationGroup vg;
    vg.group_index = static_cast<int>(out.size()) + 1;
    for (auto i : g) {
      vg.claims.push_back(claims[i]);
      vg.shared_sources.insert(*resolutions[i].valid_citations.begin());
    }
    out.push_back(std::move(vg));
  }
  return out;
}

namespace {

constexpr std::string_view kVerifySystem =
    R"(You check claims from a research report against text retrieved from the sources the claims cite.

For every claim and every listed source decide:
  Supported     the source text plainly contains the core facts of the claim (figures,
                causes, definitions) and its meaning in context matches what the claim says
  NotSupported  the source text lacks the information, is off topic, or cannot be read

Judge each source on its own. Use only the text shown; do not rely on outside knowledge.

Answer with one JSON object and nothing else:
{"results": [{"claim_id": "L2.S1#1",
              "verdicts": [{"citation": 1, "verdict": "Supported", "rationale": "..."}]}]})";

struct PendingClaim {
  const Claim* claim;
  std::map<CitationKey, std::vector<const Chunk*>> context;  // by source
};

struct ParsedVerdict {
  Verdict verdict;
  std::string rationale;
};

using ParsedGroup = std::map<ClaimId, std::map<CitationKey, ParsedVerdict>>;

ParsedGroup parse_verification(std::string_view text, const std::vector<PendingClaim>& pending) {
  auto j = parse_model_json(text);
  const nlohmann::json* list = nullptr;
  if (j.is_object() && j.contains("results")) list = &j["results"];
  if (j.is_array()) list = &j;
  if (list == nullptr || !list->is_array()) {
    throw Error(ErrorCode::kMalformedOutput, "expected an object with a \"results\" array");
  }
  ParsedGroup parsed;
  for (const auto& item : *list) {
    if (!item.is_object() || !item.contains("claim_id") || !item["claim_id"].is_string()) {
      throw Error(ErrorCode::kMalformedOutput, "result without claim_id");
    }
    auto id = ClaimId::parse(item["claim_id"].get<std::string>());
    if (!id) throw Error(ErrorCode::kMalformedOutput, "bad claim_id " + item["claim_id"].get<std::string>());
    if (!item.contains("verdicts") || !item["verdicts"].is_array()) {
      throw Error(ErrorCode::kMalformedOutput, id->str() + ": missing verdicts");
    }
    for (const auto& v : item["verdicts"]) {
      if (!v.is_object() || !v.contains("citation") || !v.contains("verdict") || !v["verdict"].is_string()) {
        throw Error(ErrorCode::kMalformedOutput, id->str() + ": verdict entry needs citation and verdict");
      }
      int key = v["citation"].is_number_integer() ? v["citation"].get<int>()
                : v["citation"].is_string()        ? [&] {
                    auto keys = parse_citations("[" + std::string(trim(v["citation"].get<std::string>())) + "]");
                    return keys.size() == 1 ? keys[0] : 0;
                  }()
                                                   : 0;
      auto verdict = parse_verdict(v["verdict"].get<std::string>());
      if (key < 1 || !verdict) throw Error(ErrorCode::kMalformedOutput, id->str() + ": bad verdict entry");
      std::string rationale = v.contains("rationale") && v["rationale"].is_string() ? v["rationale"].get<std::string>() : "";
      parsed[*id][key] = {*verdict, std::move(rationale)};
    }
  }
  for (const auto& p : pending) {
    auto it = parsed.find(p.claim->id());
    if (it == parsed.end()) throw Error(ErrorCode::kMalformedOutput, "no result for " + p.claim->id().str());
    for (const auto& [key, chunks] : p.context) {
      if (!it->second.count(key)) {
        throw Error(ErrorCode::kMalformedOutput,
                    "no verdict for " + p.claim->id().str() + " source [" + std::to_string(key) + "]");
      }
    }
  }
  return parsed;
}

}  // namespace

std::vector<VerificationRecord> verify_group(const VerificationGroup& group, const ContextMap& contexts,
                                             const std::map<ClaimId, EvidenceResolution>& resolutions, Gateway& gw,
                                             const VerifyOptions& options) {
  std::vector<VerificationRecord> records;
  std::vector<PendingClaim> pending;
  std::vector<std::size_t> pending_record;
  for (const auto& claim : group.claims) {
    VerificationRecord r;
    r.claim_id = claim.id();
    r.claim_class = claim.claim_class;
    auto res = resolutions.find(claim.id());
    if (res != resolutions.end()) r.citations_checked = res->second.valid_citations;
    for (auto key : r.citations_checked) r.per_citation_verdicts[key] = Verdict::kNotSupported;
    auto ctx = contexts.find(claim.id());
    if (ctx == contexts.end() || ctx->second.selected.empty()) {
      r.rationale = "unverifiable source";
      records.push_back(std::move(r));
      continue;
    }
    PendingClaim p{&claim, {}};
    for (const auto& chunk : ctx->second.selected) {
      r.context_hashes.push_back(sha256_hex(chunk.text));
      if (r.citations_checked.count(chunk.source_key)) p.context[chunk.source_key].push_back(&chunk);
    }
    if (p.context.empty()) {
      r.rationale = "unverifiable source";
      records.push_back(std::move(r));
      continue;
    }
    pending_record.push_back(records.size());
    pending.push_back(std::move(p));
    records.push_back(std::move(r));
  }
  if (pending.empty()) return records;

  std::string user = "Verify each claim below against the context retrieved from its cited sources.\n";
  for (const auto& p : pending) {
    user += "\n## Claim " + p.claim->id().str() + "\n" + p.claim->claim_text + "\n";
    for (const auto& [key, chunks] : p.context) {
      user += "\n### Source [" + std::to_string(key) + "]\n";
      for (const Chunk* c : chunks) {
        user += std::string(trim(c->text));
        user += "\n\n";
      }
    }
  }
  ModelRequest request;
  request.model = options.model;
  request.system_text = std::string(kVerifySystem);
  request.user_text = std::move(user);
  request.expected_schema = std::string(kVerificationSchemaId);
  request.max_output_tokens = options.max_output_tokens;

  double cost = 0.0;
  ParsedGroup parsed;
  try {
    parsed = complete_with_reask(gw, request, "verify", options.retry_budget, [&](const ModelResponse& r) {
      cost += r.cost_usd;
      return parse_verification(r.text, pending);
    });
  } catch (const Error& e) {
    throw Error(e.code(), "group " + std::to_string(group.group_index) + ": " + e.detail());
  }

  double share = cost / static_cast<double>(pending.size());
  for (std::size_t k = 0; k < pending.size(); ++k) {
    auto& r = records[pending_record[k]];
    const auto& answers = parsed.at(pending[k].claim->id());
    std::string rationale;
    for (const auto& [key, chunks] : pending[k].context) {
      const auto& a = answers.at(key);
      r.per_citation_verdicts[key] = a.verdict;
      if (!rationale.empty()) rationale += " ";
      rationale += "[" + std::to_string(key) + "] " + a.rationale;
    }
    for (const auto& [key, v] : r.per_citation_verdicts) {
      if (v == Verdict::kSupported) r.verdict = Verdict::kSupported;
    }
    r.rationale = rationale;
    r.cost_usd = share;
  }
  return records;
}

std::vector<VerificationRecord> verify_claims(const ClaimSet& claims, const std::vector<EvidenceResolution>& resolutions,
                                              const ContextMap& contexts, Gateway& gw, const VerifyOptions& options) {
  auto groups = group_claims(claims, resolutions, options.group_size);
  std::map<ClaimId, EvidenceResolution> by_id;
  for (const auto& r : resolutions) by_id[r.claim_id] = r;
  std::vector<std::vector<VerificationRecord>> per_group(groups.size());
  parallel_for(groups.size(), std::max<std::size_t>(1, options.max_in_flight),
               [&](std::size_t g) { per_group[g] = verify_group(groups[g], contexts, by_id, gw, options); });
  std::vector<VerificationRecord> records;
  for (auto& g : per_group) records.insert(records.end(), g.begin(), g.end());
  for (std::size_t i = 0; i < claims.size(); ++i) {
    const auto& c = claims[i];
    bool grouped = is_verifiable(c.claim_class) && !resolutions[i].valid_citations.empty();
    if (grouped || !(is_verifiable(c.claim_class) || c.claim_class == ClaimType::kF)) continue;
    VerificationRecord r;
    r.claim_id = c.id();
    r.claim_class = c.claim_class;
    r.rationale = "no_source";
    records.push_back(std::move(r));
  }
  std::sort(records.begin(), records.end(),
            [](const VerificationRecord& a, const VerificationRecord& b) { return a.claim_id < b.claim_id; });
  return records;
}

// ---------------------------------------------------------------------------

double quote_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::unordered_map<std::string_view, int> counts;
  for (const auto& t : a) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : b) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  std::size_t longest = 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
      longest = std::max(longest, cur[j]);
    }
    std::swap(prev, cur);
  }
  double total = static_cast<double>(a.size() + b.size());
  return std::max(2.0 * static_cast<double>(overlap), 2.0 * static_cast<double>(longest)) / total;
}

double window_similarity(const std::vector<std::string>& sentence, const std::vector<std::string>& source) {
  const std::size_t m = sentence.size();
  if (m == 0 || source.empty()) return 0.0;
  if (source.size() <= m) return quote_similarity(sentence, source);

  // Longest common run against the whole source; any run fits in some window.
  std::size_t longest = 0;
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (const auto& tok : source) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = tok == sentence[j - 1] ? prev[j - 1] + 1 : 0;
      longest = std::max(longest, cur[j]);
    }
    std::swap(prev, cur);
  }

  // Sliding multiset overlap over windows of m tokens.
  std::unordered_map<std::string_view, int> ids;
  std::vector<int> need;
  for (const auto& t : sentence) {
    auto [it, fresh] = ids.emplace(t, static_cast<int>(need.size()));
    if (fresh) need.push_back(0);
    ++need[it->second];
  }
  std::vector<int> id_of(source.size(), -1);
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (auto it = ids.find(source[i]); it != ids.end()) id_of[i] = it->second;
  }
  std::vector<int> have(need.size(), 0);
  std::size_t overlap = 0, best = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (int id = id_of[i]; id >= 0) {
      if (have[id] < need[id]) ++overlap;
      ++have[id];
    }
    if (i >= m) {
      if (int id = id_of[i - m]; id >= 0) {
        if (have[id] <= need[id]) --overlap;
        --have[id];
      }
    }
    if (i + 1 >= m) best = std::max(best, overlap);
  }
  return static_cast<double>(std::max(best, longest)) / static_cast<double>(m);
}

double fair_use_score(std::size_t detected, std::size_t noncompliant) {
  if (detected == 0) return 10.0;
  return 10.0 * (1.0 - static_cast<double>(noncompliant) / static_cast<double>(detected));
}

nlohmann::json to_json(const FairUseReport& r) {
  nlohmann::json quotes = nlohmann::json::array();
  for (const auto& q : r.detected_quotes) {
    quotes.push_back({{"position", q.position.str()},
                      {"source_key", q.source_key},
                      {"similarity", q.similarity},
                      {"properly_marked", q.properly_marked},
                      {"cited", q.cited},
                      {"compliant", q.compliant},
                      {"rationale", q.rationale}});
  }
  return {{"detected_quotes", quotes}, {"noncompliant_ratio", r.noncompliant_ratio}, {"score", r.score}};
}

FairUseReport fair_use_from_json(const nlohmann::json& j) {
  try {
    FairUseReport r;
    for (const auto& q : j.at("detected_quotes")) {
      DetectedQuote d;
      auto pos = PositionId::parse(q.at("position").get<std::string>());
      if (!pos) throw Error(ErrorCode::kSchemaViolation, "bad quote position");
      d.position = *pos;
      d.source_key = q.at("source_key").get<int>();
      d.similarity = q.at("similarity").get<double>();
      d.properly_marked = q.at("properly_marked").get<bool>();
      d.cited = q.at("cited").get<bool>();
      d.compliant = q.at("compliant").get<bool>();
      d.rationale = q.at("rationale").get<std::string>();
      r.detected_quotes.push_back(std::move(d));
    }
    r.noncompliant_ratio = j.at("noncompliant_ratio").get<double>();
    r.score = j.at("score").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("fair use json: ") + e.what());
  }
}

namespace {

constexpr std::string_view kFairUseSystem =
    R"(You review a sentence from a research report that reproduces text from one of its sources almost word for word.

Decide whether this reuse is acceptable. Acceptable reuse is short, clearly marked as a quotation and
attributed to the source. Reuse that passes the source's wording off as the author's own, or that
copies a substantial passage, is not acceptable.

Answer with one JSON object and nothing else:
{"compliant": true, "rationale": "..."})";

// Citation markers removed so "[3]" does not count as a token.
std::string without_markers(const std::string& text) {
  std::string out = text;
  std::size_t open = 0;
  while ((open = out.find('[', open)) != std::string::npos) {
    auto close = out.find(']', open);
    if (close == std::string::npos) break;
    if (!parse_citations(out.substr(open, close - open + 1)).empty()) {
      std::fill(out.begin() + static_cast<long>(open), out.begin() + static_cast<long>(close) + 1, ' ');
    }
    open = close;
  }
  return out;
}

bool marked_as_quote(const SentenceUnit& s) {
  if (s.block_kind == BlockKind::kBlockquote) return true;
  if (std::count(s.text.begin(), s.text.end(), '"') >= 2) return true;
  return s.text.find("\xE2\x80\x9C") != std::string::npos && s.text.find("\xE2\x80\x9D") != std::string::npos;
}

}  // namespace

FairUseReport detect_direct_quotes(const ReportDocument& doc, const std::vector<FetchedSource>& sources,
                                   const std::map<CitationKey, std::vector<Chunk>>& chunks_by_source, Gateway& gw,
                                   const FairUseOptions& options) {
  std::vector<std::pair<CitationKey, std::vector<std::string>>> source_tokens;
  for (const auto& s : sources) {
    if (s.ok()) source_tokens.emplace_back(s.key, word_tokens(s.content_markdown));
  }
  std::sort(source_tokens.begin(), source_tokens.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  FairUseReport report;
  std::size_t noncompliant = 0;
  for (const auto& sentence : doc.sentences) {
    auto tokens = word_tokens(without_markers(sentence.text));
    if (tokens.size() < options.min_tokens) continue;
    double best = -1.0;
    CitationKey best_key = 0;
    for (const auto& [key, toks] : source_tokens) {
      double sim = window_similarity(tokens, toks);
      if (sim > best) {
        best = sim;
        best_key = key;
      }
    }
    if (best < options.tau) continue;
    DetectedQuote q;
    q.position = sentence.position;
    q.source_key = best_key;
    q.similarity = best;
    q.properly_marked = marked_as_quote(sentence);
    q.cited = std::find(sentence.citations.begin(), sentence.citations.end(), best_key) != sentence.citations.end();
    if (q.properly_marked && q.cited) {
      q.compliant = true;
      q.rationale = "quoted and attributed";
    } else {
      std::string user = "Report sentence (" + sentence.position.str() + "):\n" + sentence.text + "\n\n";
      user += std::string("Marked as a quotation: ") + (q.properly_marked ? "yes" : "no") + "\n";
      user += "Cites source [" + std::to_string(best_key) + "]: " + (q.cited ? "yes" : "no") + "\n\n";
      user += "Source [" + std::to_string(best_key) + "] passages:\n";
      if (auto it = chunks_by_source.find(best_key); it != chunks_by_source.end()) {
        for (const auto& c : select_context(sentence.text, it->second, std::max<std::size_t>(1, options.top_n)).selected) {
          user += "\n" + std::string(trim(c.text)) + "\n";
        }
      }
      ModelRequest request;
      request.model = options.model;
      request.system_text = std::string(kFairUseSystem);
      request.user_text = std::move(user);
      request.expected_schema = "fair_use.v1";
      auto answer = complete_with_reask(gw, request, "fair_use", options.retry_budget, [](const ModelResponse& r) {
        auto j = parse_model_json(r.text);
        if (!j.is_object() || !j.contains("compliant") || !j["compliant"].is_boolean()) {
          throw Error(ErrorCode::kMalformedOutput, "expected {\"compliant\": true|false, \"rationale\": ...}");
        }
        std::string why = j.contains("rationale") && j["rationale"].is_string() ? j["rationale"].get<std::string>() : "";
        return std::make_pair(j["compliant"].get<bool>(), why);
      });
      q.compliant = answer.first;
      q.rationale = answer.second;
    }
    if (!q.compliant) ++noncompliant;
    report.detected_quotes.push_back(std::move(q));
  }
  report.noncompliant_ratio = report.detected_quotes.empty()
                                  ? 0.0
                                  : static_cast<double>(noncompliant) / static_cast<double>(report.detected_quotes.size());
  report.score = fair_use_score(report.detected_quotes.size(), noncompliant);
  return report;
}

}  // namespace reportcheck
