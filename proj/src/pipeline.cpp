#include "reportcheck/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "reportcheck/backtrack.hpp"
#include "reportcheck/claims.hpp"
#include "reportcheck/error.hpp"
#include "reportcheck/report_model.hpp"
#include "reportcheck/rubric.hpp"
#include "reportcheck/text.hpp"
#include "reportcheck/verify.hpp"

namespace fs = std::filesystem;

namespace reportcheck {

namespace {

constexpr std::string_view kFrozenRunTime = "1970-01-01T00:00:00Z";
constexpr std::string_view kModelStore = "models.jsonl";
constexpr std::string_view kSourceStore = "sources.jsonl";

std::string join_path(const std::string& dir, std::string_view name) {
  return (fs::path(dir) / std::string(name)).string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Task file

TaskFile task_file_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "task file must be a JSON object");
  auto text = [&](const char* key, bool required) -> std::string {
    if (!j.contains(key) || j[key].is_null()) {
      if (required) throw Error(ErrorCode::kConfig, std::string("task file lacks \"") + key + "\"");
      return "";
    }
    if (!j[key].is_string()) throw Error(ErrorCode::kConfig, std::string("task field \"") + key + "\" must be a string");
    return j[key].get<std::string>();
  };
  TaskFile t;
  t.task_id = text("task_id", true);
  t.domain = text("domain", false);
  t.query = text("query", true);
  t.expert_guidance = text("expert_guidance", false);
  if (trim(t.query).empty()) throw Error(ErrorCode::kConfig, "task query is empty");
  return t;
}

TaskFile load_task_file(const std::string& path) {
  if (path.empty()) throw Error(ErrorCode::kConfig, "no task file given");
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::kConfig, "task file not found: " + path);
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kConfig, path + ": task file is not valid JSON");
  try {
    return task_file_from_json(j);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, path + ": " + e.detail());
  }
}

nlohmann::json to_json(const TaskFile& t) {
  return {{"task_id", t.task_id}, {"domain", t.domain}, {"query", t.query}, {"expert_guidance", t.expert_guidance}};
}

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kIngest: return "ingest";
    case Stage::kExtract: return "extract";
    case Stage::kVerify: return "verify";
    case Stage::kMetrics: return "metrics";
    case Stage::kScore: return "score";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view name) {
  for (Stage s : kAllStages) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Config

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json prices = nlohmann::json::object();
  for (const auto& [model, p] : c.prices) {
    prices[model] = {{"input_per_mtok", p.rate_in * 1e6}, {"output_per_mtok", p.rate_out * 1e6}};
  }
  return {{"task_file", c.task_file},
          {"report_file", c.report_file},
          {"taxonomy_file", c.taxonomy_file},
          {"run_root", c.run_root},
          {"run_dir", c.run_dir},
          {"replay_dir", c.replay_dir},
          {"mode", gateway_mode_name(c.mode)},
          {"run_time", c.run_time},
          {"extractor_model", c.extractor_model},
          {"verifier_model", c.verifier_model},
          {"judge_models", c.judge_models},
          {"batch_size", c.batch_size},
          {"group_size", c.group_size},
          {"retrieval", c.retrieval},
          {"top_n", c.top_n},
          {"chunk_tokens", c.chunk_tokens},
          {"tau", c.tau},
          {"use_guidance", c.use_guidance},
          {"transitive_backtracking", c.transitive_backtracking},
          {"metrics", to_json(c.metrics)},
          {"max_in_flight", c.max_in_flight},
          {"retry_budget", c.retry_budget},
          {"backoff_initial_ms", c.backoff_initial_ms},
          {"endpoint", c.endpoint},
          {"api_key_env", c.api_key_env},
          {"converter_endpoint", c.converter_endpoint},
          {"prices", prices}};
}

namespace {

PriceTable prices_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, where + ": prices must be an object");
  PriceTable out;
  for (const auto& [model, p] : j.items()) {
    if (!p.is_object() || !p.contains("input_per_mtok") || !p.contains("output_per_mtok") ||
        !p["input_per_mtok"].is_number() || !p["output_per_mtok"].is_number()) {
      throw Error(ErrorCode::kConfig, where + ": price for " + model + " needs input_per_mtok and output_per_mtok");
    }
    double in = p["input_per_mtok"].get<double>(), o = p["output_per_mtok"].get<double>();
    if (in < 0 || o < 0) throw Error(ErrorCode::kConfig, where + ": negative price for " + model);
    out[model] = Price{in / 1e6, o / 1e6};
  }
  return out;
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "run config must be a JSON object");
  RunConfig c;
  static const std::set<std::string> known = [] {
    std::set<std::string> keys;
    nlohmann::json defaults = to_json(RunConfig{});
    for (const auto& [k, v] : defaults.items()) keys.insert(k);
    return keys;
  }();
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::kConfig, "unknown config key \"" + key + "\"");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j[key].get<std::decay_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::kConfig, std::string("config key \"") + key + "\" has the wrong type");
    }
  };
  get("task_file", c.task_file);
  get("report_file", c.report_file);
  get("taxonomy_file", c.taxonomy_file);
  get("run_root", c.run_root);
  get("run_dir", c.run_dir);
  get("replay_dir", c.replay_dir);
  if (j.contains("mode")) {
    std::string mode;
    get("mode", mode);
    auto m = parse_gateway_mode(mode);
    if (!m) throw Error(ErrorCode::kConfig, "unknown gateway mode \"" + mode + "\"");
    c.mode = *m;
  }
  get("run_time", c.run_time);
  get("extractor_model", c.extractor_model);
  get("verifier_model", c.verifier_model);
  get("judge_models", c.judge_models);
  get("batch_size", c.batch_size);
  get("group_size", c.group_size);
  get("retrieval", c.retrieval);
  get("top_n", c.top_n);
  get("chunk_tokens", c.chunk_tokens);
  get("tau", c.tau);
  get("use_guidance", c.use_guidance);
  get("transitive_backtracking", c.transitive_backtracking);
  if (j.contains("metrics")) {
    try {
      c.metrics = metrics_config_from_json(j["metrics"]);
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, "metrics: " + e.detail());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfig, std::string("metrics: ") + e.what());
    }
  }
  get("max_in_flight", c.max_in_flight);
  get("retry_budget", c.retry_budget);
  get("backoff_initial_ms", c.backoff_initial_ms);
  get("endpoint", c.endpoint);
  get("api_key_env", c.api_key_env);
  get("converter_endpoint", c.converter_endpoint);
  if (j.contains("prices")) c.prices = prices_from_json(j["prices"], "config");
  return c;
}

PriceTable load_prices(const std::string& path) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::kConfig, "prices file not found: " + path);
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kConfig, path + ": not valid JSON");
  return prices_from_json(j, path);
}

namespace {

void require_range(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kConfig, what);
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw Error(ErrorCode::kConfig, std::string("no ") + what + " given");
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::kConfig, std::string(what) + " not found: " + path);
}

}  // namespace

void validate_run_config(const RunConfig& c, Stage stage) {
  require_range(c.batch_size >= 1 && c.batch_size <= 1000, "batch_size must be in [1, 1000]");
  require_range(c.group_size >= 1 && c.group_size <= 1000, "group_size must be in [1, 1000]");
  require_range(c.top_n >= 1 && c.top_n <= 1000, "top_n must be in [1, 1000]");
  require_range(c.chunk_tokens >= 16 && c.chunk_tokens <= 100000, "chunk_tokens must be in [16, 100000]");
  require_range(c.tau > 0.0 && c.tau <= 1.0, "tau must be in (0, 1]");
  require_range(c.max_in_flight >= 1 && c.max_in_flight <= 64, "max_in_flight must be in [1, 64]");
  require_range(c.retry_budget >= 0 && c.retry_budget <= 10, "retry_budget must be in [0, 10]");
  require_range(c.backoff_initial_ms >= 0, "backoff_initial_ms must not be negative");
  require_range(!c.extractor_model.empty() && !c.verifier_model.empty(), "model ids must not be empty");
  require_range(!c.judge_models.empty(), "at least one judge model is needed");
  std::set<std::string> judges;
  for (const auto& m : c.judge_models) {
    require_range(!m.empty(), "judge model ids must not be empty");
    require_range(judges.insert(m).second, "judge model listed twice: " + m);
  }
  try {
    validate_metrics_config(c.metrics);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.detail());
  }
  if (!c.run_time.empty()) {
    try {
      parse_utc_timestamp(c.run_time);
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, "run_time: " + e.detail());
    }
  }
  if (stage == Stage::kIngest) {
    require_file(c.task_file, "task file");
    require_file(c.report_file, "report file");
  }
  if (stage == Stage::kIngest || stage == Stage::kScore) require_file(c.taxonomy_file, "taxonomy file");
}

std::string describe_config(const RunConfig& c) {
  std::ostringstream out;
  nlohmann::json j = to_json(c);
  for (const auto& [key, value] : j.items()) {
    out << key << " = " << (value.is_string() ? value.get<std::string>() : value.dump()) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Stages

namespace {

struct RunContext {
  RunConfig config;
  std::string run_dir;
  std::string replay_dir;
  std::string run_time;
  RunServices services;
};

std::string dir_stamp(const std::string& run_time) {
  std::string out;
  for (char ch : run_time) {
    if (ch != '-' && ch != ':') out += ch;
  }
  return out;
}

std::string fresh_run_dir(const std::string& root, const std::string& run_time) {
  std::string base = join_path(root, dir_stamp(run_time));
  std::string dir = base;
  for (int n = 2; fs::exists(dir); ++n) dir = base + "-" + std::to_string(n);
  return dir;
}

RunContext make_context(const RunConfig& config, const RunServices& services, Stage stage) {
  validate_run_config(config, stage);
  RunContext ctx;
  ctx.config = config;
  ctx.services = services;
  ctx.run_time = config.run_time;
  if (ctx.run_time.empty()) {
    ctx.run_time = config.mode == GatewayMode::kReplay ? std::string(kFrozenRunTime)
                                                       : utc_timestamp(std::chrono::system_clock::now());
  }
  ctx.run_dir = config.run_dir.empty() ? fresh_run_dir(config.run_root, ctx.run_time) : config.run_dir;
  ctx.replay_dir = config.replay_dir.empty() ? join_path(ctx.run_dir, "replay") : config.replay_dir;

  bool needs_models = stage == Stage::kExtract || stage == Stage::kVerify || stage == Stage::kScore;
  if (config.mode == GatewayMode::kReplay) {
    std::vector<std::string_view> stores;
    if (needs_models) stores.push_back(kModelStore);
    if (stage == Stage::kVerify) stores.push_back(kSourceStore);
    for (auto name : stores) {
      std::string path = join_path(ctx.replay_dir, name);
      if (!fs::is_regular_file(path)) throw Error(ErrorCode::kConfig, "replay store not found: " + path);
    }
  } else if (needs_models && !ctx.services.backend) {
    if (config.endpoint.empty()) throw Error(ErrorCode::kConfig, "live and record modes need an endpoint");
    ctx.services.backend = std::make_shared<HttpChatBackend>(config.endpoint, config.api_key_env);
  }
  if (config.mode != GatewayMode::kReplay && stage == Stage::kVerify) {
    if (!ctx.services.getter) ctx.services.getter = std::make_shared<HttpPageGetter>();
    if (!ctx.services.converter && !config.converter_endpoint.empty()) {
      ctx.services.converter = std::make_shared<EndpointConverter>(config.converter_endpoint);
    }
  }

  return ctx;
}

void prepare_run_dir(const RunContext& ctx) {
  const RunConfig& config = ctx.config;
  fs::create_directories(ctx.run_dir);
  // Keep a copy of the replay stores next to the manifest.
  std::string local_replay = join_path(ctx.run_dir, "replay");
  if (config.mode == GatewayMode::kReplay && fs::weakly_canonical(ctx.replay_dir) != fs::weakly_canonical(local_replay)) {
    fs::create_directories(local_replay);
    for (auto name : {kModelStore, kSourceStore}) {
      std::string from = join_path(ctx.replay_dir, name);
      if (fs::is_regular_file(from)) {
        fs::copy_file(from, join_path(local_replay, name), fs::copy_options::overwrite_existing);
      }
    }
  }
  if (config.mode == GatewayMode::kRecord) fs::create_directories(ctx.replay_dir);
}

std::unique_ptr<Gateway> make_gateway(const RunContext& ctx) {
  GatewayOptions options;
  options.mode = ctx.config.mode;
  options.retry_budget = ctx.config.retry_budget;
  options.backoff_initial_ms = ctx.config.backoff_initial_ms;
  options.prices = ctx.config.prices;
  std::shared_ptr<ReplayStore> store;
  if (ctx.config.mode != GatewayMode::kLive) store = ReplayStore::open(join_path(ctx.replay_dir, kModelStore));
  return std::make_unique<Gateway>(options, ctx.services.backend, store);
}

MaybeValue maybe_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

InfoDimensionScores info_from_json(const nlohmann::json& j) {
  InfoDimensionScores s;
  s.information_integrity = maybe_from_json(j.at("information_integrity"));
  s.information_sufficiency = maybe_from_json(j.at("information_sufficiency"));
  for (const auto& [name, v] : j.at("components").items()) s.components[name] = maybe_from_json(v);
  return s;
}

ReportDocument manifest_document(const nlohmann::json& m) { return document_from_json(m.at("document").at("parsed")); }

ClaimSet manifest_claims(const nlohmann::json& m) {
  ClaimSet claims;
  for (const auto& c : m.at("claims")) claims.push_back(claim_from_json(c));
  return claims;
}

std::vector<EvidenceResolution> manifest_resolutions(const nlohmann::json& m) {
  std::vector<EvidenceResolution> out;
  for (const auto& r : m.at("resolutions")) out.push_back(resolution_from_json(r));
  return out;
}

void require(const nlohmann::json& m, std::initializer_list<const char*> keys, Stage stage) {
  for (const char* key : keys) {
    if (!m.contains(key)) {
      throw Error(ErrorCode::kMissingUpstream,
                  std::string(stage_name(stage)) + " needs \"" + key + "\" from an earlier stage");
    }
  }
}

// Keys each stage owns in the manifest.
const std::map<Stage, std::vector<const char*>>& stage_keys() {
  static const std::map<Stage, std::vector<const char*>> keys{
      {Stage::kIngest, {"task", "document", "taxonomy"}},
      {Stage::kExtract, {"claims", "resolutions", "extraction"}},
      {Stage::kVerify, {"sources", "contexts", "verification", "fair_use"}},
      {Stage::kMetrics, {"metrics"}},
      {Stage::kScore, {"scores"}},
  };
  return keys;
}

std::vector<Stage> downstream_of(Stage stage) {
  switch (stage) {
    case Stage::kIngest: return {Stage::kExtract, Stage::kVerify, Stage::kMetrics, Stage::kScore};
    case Stage::kExtract: return {Stage::kVerify, Stage::kMetrics};
    case Stage::kVerify: return {Stage::kMetrics};
    default: return {};
  }
}

void drop_stage(nlohmann::json& m, Stage stage) {
  for (const char* key : stage_keys().at(stage)) m.erase(key);
  if (m.contains("calls")) m["calls"].erase(std::string(stage_name(stage)));
}

void run_ingest(nlohmann::json& m, const RunContext& ctx) {
  TaskFile task = load_task_file(ctx.config.task_file);
  Taxonomy taxonomy = load_taxonomy(ctx.config.taxonomy_file);
  std::string report = read_file(ctx.config.report_file);
  std::string taxonomy_text = read_file(ctx.config.taxonomy_file);
  ReportDocument doc = segment_report(report);
  m["task"] = to_json(task);
  m["document"] = {{"path", ctx.config.report_file}, {"sha256", sha256_hex(report)}, {"parsed", to_json(doc)}};
  m["taxonomy"] = {{"path", ctx.config.taxonomy_file}, {"sha256", sha256_hex(taxonomy_text)}, {"tree", to_json(taxonomy)}};
}

void run_extract(nlohmann::json& m, const RunContext& ctx, Gateway& gw) {
  require(m, {"document"}, Stage::kExtract);
  ReportDocument doc = manifest_document(m);
  auto batches = plan_batches(doc, ctx.config.batch_size);
  ExtractionOptions options;
  options.model = ctx.config.extractor_model;
  options.retry_budget = ctx.config.retry_budget;
  std::vector<BatchExtraction> results(batches.size());
  parallel_for(batches.size(), ctx.config.max_in_flight,
               [&](std::size_t i) { results[i] = extract_claims(doc, batches[i], gw, options); });
  std::vector<std::vector<Claim>> per_batch;
  int retries = 0;
  for (auto& r : results) {
    per_batch.push_back(std::move(r.claims));
    retries += r.retries;
  }
  ClaimSet claims = merge_batches(per_batch);
  auto resolutions = resolve_all(claims, doc, BacktrackOptions{ctx.config.transitive_backtracking});

  nlohmann::json claims_json = nlohmann::json::array(), res_json = nlohmann::json::array();
  std::map<std::string, int> by_class;
  for (char letter : std::string("ABCDEF")) by_class[std::string(1, letter)] = 0;
  for (const auto& c : claims) {
    claims_json.push_back(to_json(c));
    ++by_class[std::string(1, claim_type_letter(c.claim_class))];
  }
  for (const auto& r : resolutions) res_json.push_back(to_json(r));
  m["claims"] = claims_json;
  m["resolutions"] = res_json;
  m["extraction"] = {{"batches", batches.size()},
                     {"retries", retries},
                     {"claims_per_paragraph", claims_per_paragraph(claims, doc)},
                     {"claims_by_class", by_class}};
}

void run_verify(nlohmann::json& m, const RunContext& ctx, Gateway& gw) {
  require(m, {"document", "claims", "resolutions"}, Stage::kVerify);
  ReportDocument doc = manifest_document(m);
  ClaimSet claims = manifest_claims(m);
  auto resolutions = manifest_resolutions(m);

  FetchOptions fo;
  fo.mode = ctx.config.mode == GatewayMode::kLive     ? FetchMode::kLive
            : ctx.config.mode == GatewayMode::kRecord ? FetchMode::kRecord
                                                      : FetchMode::kReplay;
  fo.snapshot_path = fo.mode == FetchMode::kLive ? "" : join_path(ctx.replay_dir, kSourceStore);
  fo.cache_dir = fo.mode == FetchMode::kReplay ? "" : join_path(ctx.run_dir, "cache");
  fo.max_in_flight = static_cast<std::size_t>(ctx.config.max_in_flight);
  fo.retries = ctx.config.retry_budget;
  fo.backoff_initial_ms = ctx.config.backoff_initial_ms;
  Fetcher fetcher(fo, ctx.services.getter, ctx.services.converter);
  if (fo.mode == FetchMode::kReplay || !ctx.config.run_time.empty()) {
    auto frozen = parse_utc_timestamp(ctx.run_time);
    fetcher.set_clock([frozen] { return frozen; });
  }
  auto sources = fetcher.fetch_all(doc);

  std::map<CitationKey, std::vector<Chunk>> chunks;
  for (const auto& s : sources) {
    if (s.ok()) chunks[s.key] = chunk_source(s, ctx.config.chunk_tokens);
  }
  std::size_t budget = ctx.config.retrieval ? static_cast<std::size_t>(ctx.config.top_n) : kAllChunks;
  ContextMap contexts;
  nlohmann::json contexts_json = nlohmann::json::object();
  for (std::size_t i = 0; i < claims.size(); ++i) {
    const auto& claim = claims[i];
    const auto& valid = resolutions[i].valid_citations;
    if (!is_verifiable(claim.claim_class) || valid.empty()) continue;
    auto selection = select_context(claim.claim_text, candidate_pool(valid, chunks), budget);
    selection.claim_id = claim.id();
    contexts_json[claim.id().str()] = to_json(selection);
    contexts.emplace(claim.id(), std::move(selection));
  }

  VerifyOptions vo;
  vo.model = ctx.config.verifier_model;
  vo.group_size = ctx.config.group_size;
  vo.retry_budget = ctx.config.retry_budget;
  vo.max_in_flight = static_cast<std::size_t>(ctx.config.max_in_flight);
  auto records = verify_claims(claims, resolutions, contexts, gw, vo);

  FairUseOptions fu;
  fu.tau = ctx.config.tau;
  fu.model = ctx.config.verifier_model;
  fu.retry_budget = ctx.config.retry_budget;
  auto fair = detect_direct_quotes(doc, sources, chunks, gw, fu);

  nlohmann::json sources_json = nlohmann::json::array(), records_json = nlohmann::json::array();
  for (const auto& s : sources) sources_json.push_back(to_json(s));
  for (const auto& r : records) records_json.push_back(to_json(r));
  m["sources"] = sources_json;
  m["contexts"] = contexts_json;
  m["verification"] = records_json;
  m["fair_use"] = to_json(fair);
}

void run_metrics(nlohmann::json& m, const RunContext& ctx) {
  require(m, {"document", "claims", "resolutions", "sources", "verification"}, Stage::kMetrics);
  ReportDocument doc = manifest_document(m);
  ClaimSet claims = manifest_claims(m);
  auto resolutions = manifest_resolutions(m);
  std::vector<FetchedSource> sources;
  for (const auto& s : m.at("sources")) sources.push_back(fetched_source_from_json(s));
  std::vector<VerificationRecord> records;
  for (const auto& r : m.at("verification")) records.push_back(verification_record_from_json(r));
  const MetricsConfig& config = ctx.config.metrics;
  auto integrity = compute_integrity(claims, resolutions, records, doc, sources, config);
  auto sufficiency = compute_sufficiency(claims, records);
  auto dims = normalize_to_dimensions(integrity, sufficiency, config);
  m["metrics"] = {{"config", to_json(config)},
                  {"integrity", to_json(integrity)},
                  {"sufficiency", to_json(sufficiency)},
                  {"dimensions", to_json(dims)}};
}

void run_score(nlohmann::json& m, const RunContext& ctx, Gateway& gw) {
  require(m, {"task", "document", "taxonomy"}, Stage::kScore);
  Taxonomy taxonomy = taxonomy_from_json(m.at("taxonomy").at("tree"));
  TaskFile task = task_file_from_json(m.at("task"));
  JudgeInput input;
  input.task_query = task.query;
  input.report = m.at("document").at("parsed").at("source_text").get<std::string>();
  if (ctx.config.use_guidance && !trim(task.expert_guidance).empty()) input.expert_guidance = task.expert_guidance;
  input.taxonomy = &taxonomy;
  JudgeOptions options;
  options.retry_budget = ctx.config.retry_budget;
  options.max_in_flight = ctx.config.max_in_flight;
  nlohmann::json scores = nlohmann::json::object();
  for (const auto& judge : ctx.config.judge_models) {
    input.judge_model_id = judge;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& s : judge_report(input, gw, options)) list.push_back(to_json(s));
    scores[judge] = list;
  }
  m["scores"] = scores;
}

// Aggregates always follow the current scores and metrics.
void refresh_aggregates(nlohmann::json& m) {
  m.erase("aggregates");
  if (!m.contains("scores") || !m.contains("taxonomy")) return;
  Taxonomy taxonomy = taxonomy_from_json(m.at("taxonomy").at("tree"));
  std::optional<InfoDimensionScores> info;
  if (m.contains("metrics")) info = info_from_json(m.at("metrics").at("dimensions"));
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [judge, list] : m.at("scores").items()) {
    std::vector<FactorScore> scores;
    for (const auto& s : list) scores.push_back(factor_score_from_json(s));
    out[judge] = to_json(aggregate(scores, taxonomy, info ? &*info : nullptr), taxonomy);
  }
  m["aggregates"] = out;
}

nlohmann::json snapshot_config(const RunContext& ctx) {
  nlohmann::json snap = to_json(ctx.config);
  // Where the run lives is not part of what was computed.
  snap.erase("run_dir");
  snap.erase("run_root");
  snap["run_time"] = ctx.run_time;
  return snap;
}

void write_manifest(const std::string& run_dir, const nlohmann::json& m) {
  std::string path = join_path(run_dir, kManifestFile);
  write_file(path + ".tmp", m.dump(2) + "\n");
  fs::rename(path + ".tmp", path);
}

nlohmann::json execute_stage(Stage stage, const RunContext& ctx, nlohmann::json m) {
  prepare_run_dir(ctx);
  m.erase("failed_stage");
  m["config"] = snapshot_config(ctx);
  m["run"] = {{"mode", gateway_mode_name(ctx.config.mode)}, {"run_time", ctx.run_time}};
  if (!m.contains("history")) m["history"] = nlohmann::json::array();

  // Upstream checks come before anything is dropped or written.
  switch (stage) {
    case Stage::kExtract: require(m, {"document"}, stage); break;
    case Stage::kVerify: require(m, {"document", "claims", "resolutions"}, stage); break;
    case Stage::kMetrics: require(m, {"document", "claims", "resolutions", "sources", "verification"}, stage); break;
    case Stage::kScore: require(m, {"task", "document", "taxonomy"}, stage); break;
    case Stage::kIngest: break;
  }

  nlohmann::json before = m;
  try {
    std::unique_ptr<Gateway> gw;
    if (stage == Stage::kExtract || stage == Stage::kVerify || stage == Stage::kScore) gw = make_gateway(ctx);
    switch (stage) {
      case Stage::kIngest: run_ingest(m, ctx); break;
      case Stage::kExtract: run_extract(m, ctx, *gw); break;
      case Stage::kVerify: run_verify(m, ctx, *gw); break;
      case Stage::kMetrics: run_metrics(m, ctx); break;
      case Stage::kScore: run_score(m, ctx, *gw); break;
    }
    for (Stage d : downstream_of(stage)) drop_stage(m, d);
    if (gw) {
      m["calls"][std::string(stage_name(stage))] = gw->ledger().summary();
    } else if (m.contains("calls")) {
      m["calls"].erase(std::string(stage_name(stage)));
    }
    if (!m.contains("calls")) m["calls"] = nlohmann::json::object();
    refresh_aggregates(m);
  } catch (const std::exception& e) {
    std::string detail;
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
      if (err->code() == ErrorCode::kConfig) throw;
      detail = std::string(error_code_name(err->code())) + ": " + err->detail();
    } else {
      detail = std::string("internal: ") + e.what();
    }
    before["failed_stage"] = {{"stage", stage_name(stage)}, {"error", detail}};
    write_manifest(ctx.run_dir, before);
    write_file(join_path(ctx.run_dir, kSummaryFile), render_summary(before));
    throw Error(ErrorCode::kStageFailure, std::string(stage_name(stage)) + ": " + detail);
  }
  m["history"].push_back({{"stage", stage_name(stage)},
                          {"finished_at", ctx.config.mode == GatewayMode::kReplay || !ctx.config.run_time.empty()
                                              ? ctx.run_time
                                              : utc_timestamp(std::chrono::system_clock::now())}});
  write_manifest(ctx.run_dir, m);
  return m;
}

}  // namespace

RunOutcome run_stage(Stage stage, const RunConfig& config, const nlohmann::json* prior, const RunServices& services) {
  if (stage != Stage::kIngest && prior == nullptr) {
    throw Error(ErrorCode::kMissingUpstream, std::string(stage_name(stage)) + " needs a manifest from an earlier stage");
  }
  RunContext ctx = make_context(config, services, stage);
  nlohmann::json m = prior != nullptr ? *prior : nlohmann::json::object();
  if (stage == Stage::kIngest) {
    nlohmann::json fresh = nlohmann::json::object();
    if (m.contains("history")) fresh["history"] = m["history"];
    m = std::move(fresh);
  }
  RunOutcome out{execute_stage(stage, ctx, std::move(m)), ctx.run_dir};
  write_file(join_path(ctx.run_dir, kSummaryFile), render_summary(out.manifest));
  return out;
}

RunOutcome run_evaluate(const RunConfig& config, const RunServices& services) {
  // Every stage's preconditions are checked before the first one runs.
  RunConfig fixed = config;
  for (Stage s : kAllStages) validate_run_config(fixed, s);
  RunContext ctx = make_context(fixed, services, Stage::kIngest);
  fixed.run_dir = ctx.run_dir;
  fixed.run_time = ctx.run_time;
  std::vector<RunContext> contexts;
  for (Stage s : kAllStages) contexts.push_back(make_context(fixed, services, s));
  nlohmann::json m = nlohmann::json::object();
  for (std::size_t i = 0; i < kAllStages.size(); ++i) m = execute_stage(kAllStages[i], contexts[i], std::move(m));
  write_file(join_path(ctx.run_dir, kSummaryFile), render_summary(m));
  return {std::move(m), ctx.run_dir};
}

nlohmann::json load_manifest(const std::string& run_dir) {
  std::string path = join_path(run_dir, kManifestFile);
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::kConfig, "manifest not found: " + path);
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kConfig, path + ": not a manifest");
  return j;
}

// ---------------------------------------------------------------------------
// Summary

namespace {

std::string fmt(const nlohmann::json& v) {
  if (v.is_null()) return "n/a";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v.get<double>());
  return buf;
}

std::string fmt_cost(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string table_row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + c + " |";
  return out + "\n";
}

std::string table_rule(std::size_t columns, std::size_t text_columns = 1) {
  std::string out = "|";
  for (std::size_t i = 0; i < columns; ++i) out += i < text_columns ? "---|" : "---:|";
  return out + "\n";
}

const nlohmann::json& at_or_null(const nlohmann::json& j, std::initializer_list<const char*> path) {
  static const nlohmann::json null_value;
  const nlohmann::json* cur = &j;
  for (const char* key : path) {
    if (!cur->is_object() || !cur->contains(key)) return null_value;
    cur = &(*cur)[key];
  }
  return *cur;
}

}  // namespace

std::string render_summary(const nlohmann::json& m) {
  std::ostringstream out;
  out << "# Evaluation summary\n\n";
  const auto& task = at_or_null(m, {"task"});
  if (!task.is_null()) {
    out << "- Task: " << task.value("task_id", "") << (task.value("domain", "").empty() ? "" : " (" + task.value("domain", "") + ")")
        << "\n";
  }
  const auto& doc = at_or_null(m, {"document"});
  if (!doc.is_null()) {
    out << "- Report: " << doc.value("path", "") << "\n";
    out << "- Report SHA-256: " << doc.value("sha256", "") << "\n";
  }
  const auto& run = at_or_null(m, {"run"});
  if (!run.is_null()) out << "- Gateway mode: " << run.value("mode", "") << ", run time " << run.value("run_time", "") << "\n";
  const auto& failed = at_or_null(m, {"failed_stage"});
  if (!failed.is_null()) {
    out << "- Failed stage: " << failed.value("stage", "") << " (" << failed.value("error", "") << ")\n";
  }

  const auto& dims = at_or_null(m, {"taxonomy", "tree", "dimensions"});
  const auto& aggregates = at_or_null(m, {"aggregates"});
  if (dims.is_array() && aggregates.is_object() && !aggregates.empty()) {
    out << "\n## Dimension scores\n\n";
    std::vector<std::string> head{"Judge"};
    for (const auto& d : dims) {
      std::string label = d.value("short_name", "");
      head.push_back(label.empty() ? d.value("name", "") : label);
    }
    head.push_back("Mean");
    out << table_row(head) << table_rule(head.size());
    for (const auto& [judge, agg] : aggregates.items()) {
      std::vector<std::string> row{judge};
      for (const auto& d : dims) row.push_back(fmt(at_or_null(agg, {"dimensions", d.value("id", "").c_str(), "score"})));
      row.push_back(fmt(agg.value("overall", nlohmann::json())));
      out << table_row(row);
    }
  }

  const auto& metrics = at_or_null(m, {"metrics"});
  if (!metrics.is_null()) {
    out << "\n## Information verification\n\n";
    out << table_row({"Metric", "Value", "Score"}) << table_rule(3);
    const std::vector<std::tuple<const char*, const char*, const char*, const char*>> rows{
        {"Verifiable ratio", "sufficiency", "verifiable_ratio", "verifiable_ratio"},
        {"Information quantity", "sufficiency", "info_qty", "info_qty"},
        {"Citation quantity", "sufficiency", "cit_qty", "cit_qty"},
        {"Reference quantity", "sufficiency", "ref_qty", "ref_qty"},
        {"External claim accuracy", "integrity", "ext_claim_accuracy", "ext_claim_accuracy"},
        {"Citation accuracy", "integrity", "citation_accuracy", "citation_accuracy"},
        {"Reference accuracy", "integrity", "reference_accuracy", "reference_accuracy"},
        {"Reproducibility", "integrity", "reproducibility", "reproducibility"},
        {"Reliability", "integrity", "reliability", "reliability"},
        {"Source diversity (CV)", "integrity", "diversity_cv", "diversity"},
    };
    for (const auto& [label, group, raw, component] : rows) {
      out << table_row({label, fmt(at_or_null(metrics, {group, raw})),
                        fmt(at_or_null(metrics, {"dimensions", "components", component}))});
    }
    out << table_row({"Information sufficiency", "", fmt(at_or_null(metrics, {"dimensions", "information_sufficiency"}))});
    out << table_row({"Information integrity", "", fmt(at_or_null(metrics, {"dimensions", "information_integrity"}))});
  }

  const auto& claims = at_or_null(m, {"claims"});
  if (claims.is_array()) {
    std::map<std::string, std::pair<int, int>> by_class;  // claims, supported
    for (char letter : std::string("ABCDEF")) by_class[std::string(1, letter)] = {0, 0};
    for (const auto& c : claims) ++by_class[c.value("claim_class", "?")].first;
    const auto& records = at_or_null(m, {"verification"});
    if (records.is_array()) {
      for (const auto& r : records) {
        if (r.value("verdict", "") == "Supported") ++by_class[r.value("claim_class", "?")].second;
      }
    }
    out << "\n## Claims\n\n";
    out << table_row({"Class", "Claims", "Supported"}) << table_rule(3);
    int total = 0, supported = 0;
    for (const auto& [cls, counts] : by_class) {
      bool checked = records.is_array() && (cls == "A" || cls == "B" || cls == "C" || cls == "F");
      out << table_row({cls, std::to_string(counts.first), checked ? std::to_string(counts.second) : "-"});
      total += counts.first;
      supported += counts.second;
    }
    out << table_row({"All", std::to_string(total), records.is_array() ? std::to_string(supported) : "-"});
  }

  const auto& fair = at_or_null(m, {"fair_use"});
  if (!fair.is_null()) {
    const auto& quotes = at_or_null(fair, {"detected_quotes"});
    std::size_t detected = quotes.is_array() ? quotes.size() : 0, noncompliant = 0;
    if (quotes.is_array()) {
      for (const auto& q : quotes) noncompliant += q.value("compliant", true) ? 0 : 1;
    }
    out << "\n## Fair use\n\n";
    out << table_row({"Detected quotes", "Non-compliant", "Score"}) << table_rule(3, 0);
    out << table_row({std::to_string(detected), std::to_string(noncompliant), fmt(at_or_null(fair, {"score"}))});
  }

  const auto& calls = at_or_null(m, {"calls"});
  if (calls.is_object() && !calls.empty()) {
    out << "\n## Model calls\n\n";
    out << table_row({"Stage", "Step", "Calls", "Input tokens", "Output tokens", "Cost (USD)"}) << table_rule(6, 2);
    long long all_calls = 0, all_in = 0, all_out = 0;
    double all_cost = 0.0;
    for (Stage s : kAllStages) {
      const auto& summary = at_or_null(calls, {std::string(stage_name(s)).c_str()});
      if (summary.is_null()) continue;
      for (const auto& [step, t] : summary.at("stages").items()) {
        out << table_row({std::string(stage_name(s)), step, fmt(t.at("calls")), fmt(t.at("input_tokens")),
                          fmt(t.at("output_tokens")), fmt_cost(t.at("cost_usd").get<double>())});
      }
      const auto& t = summary.at("total");
      all_calls += t.at("calls").get<long long>();
      all_in += t.at("input_tokens").get<long long>();
      all_out += t.at("output_tokens").get<long long>();
      all_cost += t.at("cost_usd").get<double>();
    }
    out << table_row({"All", "", std::to_string(all_calls), std::to_string(all_in), std::to_string(all_out),
                      fmt_cost(all_cost)});
  }
  return out.str();
}

}  // namespace reportcheck
