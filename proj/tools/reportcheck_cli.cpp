// Command-line front end over the C API.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "reportcheck/reportcheck.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

int exit_code_for(rc_status status) {
  switch (status) {
    case RC_OK: return kExitOk;
    case RC_CONFIG:
    case RC_INVALID_ARGUMENT:
    case RC_MISSING_UPSTREAM: return kExitConfig;
    default: return kExitStage;
  }
}

int fail(rc_status status) {
  std::cerr << "reportcheck: " << rc_last_error() << "\n";
  return exit_code_for(status);
}

std::string take(char* s) {
  std::string out = s == nullptr ? "" : s;
  rc_string_free(s);
  return out;
}

bool read_text(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream buf;
  buf << in.rdbuf();
  out = buf.str();
  return true;
}

struct RunFlags {
  std::string config_file;
  std::string task, report, taxonomy, run_root, run_dir, replay_dir, gateway, run_time;
  std::string extractor_model, verifier_model;
  std::vector<std::string> judges;
  int batch_size = 0, group_size = 0, top_n = 0, chunk_tokens = 0, max_in_flight = 0, retry_budget = 0;
  double tau = 0;
  std::string retrieval, guidance;
  bool transitive = false;
  std::string endpoint, api_key_env, converter_endpoint, prices_file, metrics_file;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON file with run settings; flags override it");
  cmd->add_option("--task", f.task, "Task file (task_id, domain, query, expert_guidance)");
  cmd->add_option("--report", f.report, "Markdown report to evaluate");
  cmd->add_option("--taxonomy", f.taxonomy, "Rubric taxonomy JSON");
  cmd->add_option("--run-root", f.run_root, "Parent directory of new runs [run]");
  cmd->add_option("--run-dir", f.run_dir, "Run directory; an existing manifest there is the prior state");
  cmd->add_option("--replay-dir", f.replay_dir, "Directory with models.jsonl and sources.jsonl [run-dir/replay]");
  cmd->add_option("--gateway", f.gateway, "Model and fetch mode [replay]")->check(CLI::IsMember({"live", "record", "replay"}));
  cmd->add_option("--run-time", f.run_time, "Fixed UTC run time, e.g. 2025-01-01T00:00:00Z");
  cmd->add_option("--extractor-model", f.extractor_model, "Claim extraction model id [extractor]");
  cmd->add_option("--verifier-model", f.verifier_model, "Verification model id [verifier]");
  cmd->add_option("--judge", f.judges, "Judge model id, repeatable [judge]");
  cmd->add_option("--batch-size", f.batch_size, "Sentences per extraction batch [20]");
  cmd->add_option("--group-size", f.group_size, "Claims per verification call [20]");
  cmd->add_option("--retrieval", f.retrieval, "BM25 context selection [on]")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--top-n", f.top_n, "Chunks kept per claim when retrieval is on [5]");
  cmd->add_option("--chunk-tokens", f.chunk_tokens, "Target chunk size in tokens [1000]");
  cmd->add_option("--tau", f.tau, "Direct-quote similarity threshold [0.9]");
  cmd->add_option("--guidance", f.guidance, "Pass expert guidance to the judge [on]")->check(CLI::IsMember({"on", "off"}));
  cmd->add_flag("--transitive", f.transitive, "Follow evidence pointers through B/C claims");
  cmd->add_option("--max-in-flight", f.max_in_flight, "Concurrent model calls and fetches [4]");
  cmd->add_option("--retry-budget", f.retry_budget, "Re-asks and transport retries [2]");
  cmd->add_option("--endpoint", f.endpoint, "Chat-completion URL for live/record");
  cmd->add_option("--api-key-env", f.api_key_env, "Env var holding the API key [REPORTCHECK_API_KEY]");
  cmd->add_option("--converter-endpoint", f.converter_endpoint, "HTML-to-markdown service; built-in stripper when unset");
  cmd->add_option("--prices", f.prices_file, "JSON {model: {input_per_mtok, output_per_mtok}}");
  cmd->add_option("--metrics-config", f.metrics_file, "JSON with normalization thresholds and reliability lists");
}

// Only flags given on the command line end up in the overrides.
bool build_overrides(CLI::App* cmd, const RunFlags& f, bool new_run, nlohmann::json& out) {
  out = nlohmann::json::object();
  auto load_json = [](const std::string& path, nlohmann::json& j) {
    std::string text;
    if (!read_text(path, text)) {
      std::cerr << "reportcheck: cannot read " << path << "\n";
      return false;
    }
    j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) {
      std::cerr << "reportcheck: " << path << " is not valid JSON\n";
      return false;
    }
    return true;
  };
  if (cmd->count("--config")) {
    if (!load_json(f.config_file, out) || !out.is_object()) return false;
  }
  auto set = [&](const char* flag, const char* key, const auto& value) {
    if (cmd->count(flag)) out[key] = value;
  };
  set("--task", "task_file", f.task);
  set("--report", "report_file", f.report);
  set("--taxonomy", "taxonomy_file", f.taxonomy);
  set("--run-root", "run_root", f.run_root);
  set("--replay-dir", "replay_dir", f.replay_dir);
  set("--gateway", "mode", f.gateway);
  set("--run-time", "run_time", f.run_time);
  set("--extractor-model", "extractor_model", f.extractor_model);
  set("--verifier-model", "verifier_model", f.verifier_model);
  set("--judge", "judge_models", f.judges);
  set("--batch-size", "batch_size", f.batch_size);
  set("--group-size", "group_size", f.group_size);
  set("--top-n", "top_n", f.top_n);
  set("--chunk-tokens", "chunk_tokens", f.chunk_tokens);
  set("--tau", "tau", f.tau);
  set("--max-in-flight", "max_in_flight", f.max_in_flight);
  set("--retry-budget", "retry_budget", f.retry_budget);
  set("--endpoint", "endpoint", f.endpoint);
  set("--api-key-env", "api_key_env", f.api_key_env);
  set("--converter-endpoint", "converter_endpoint", f.converter_endpoint);
  if (cmd->count("--retrieval")) out["retrieval"] = f.retrieval == "on";
  if (cmd->count("--guidance")) out["use_guidance"] = f.guidance == "on";
  if (f.transitive) out["transitive_backtracking"] = true;
  if (cmd->count("--prices")) {
    nlohmann::json prices;
    if (!load_json(f.prices_file, prices)) return false;
    out["prices"] = prices;
  }
  if (cmd->count("--metrics-config")) {
    nlohmann::json metrics;
    if (!load_json(f.metrics_file, metrics)) return false;
    out["metrics"] = metrics;
  }
  if (new_run && !out.contains("taxonomy_file")) out["taxonomy_file"] = std::string(REPORTCHECK_DEFAULT_TAXONOMY);
  return true;
}

void print_config(const rc_engine* engine) {
  char* text = nullptr;
  if (rc_engine_config(engine, &text) != RC_OK) return;
  auto j = nlohmann::json::parse(take(text), nullptr, false);
  if (j.is_discarded()) return;
  std::cerr << "reportcheck: settings\n";
  for (const auto& [key, value] : j.items()) {
    std::cerr << "  " << key << " = " << (value.is_string() ? value.get<std::string>() : value.dump()) << "\n";
  }
}

bool manifest_exists(const std::string& run_dir) {
  std::ifstream in(run_dir + "/manifest.json");
  return static_cast<bool>(in);
}

int run_command(const std::string& name, CLI::App* cmd, const RunFlags& f) {
  bool evaluate = name == "evaluate";
  bool new_run = evaluate || f.run_dir.empty() || !manifest_exists(f.run_dir);
  nlohmann::json overrides;
  if (!build_overrides(cmd, f, new_run, overrides)) return kExitConfig;
  if (evaluate && !f.run_dir.empty()) overrides["run_dir"] = f.run_dir;

  rc_engine* engine = nullptr;
  rc_status status = rc_engine_create(overrides.dump().c_str(), &engine);
  if (status != RC_OK) return fail(status);
  print_config(engine);

  std::string run_dir = f.run_dir;
  if (evaluate) {
    char* dir = nullptr;
    status = rc_run_evaluate(engine, nullptr, &dir);
    if (status == RC_OK) run_dir = take(dir);
  } else {
    char* dir = nullptr;
    status = rc_run_stage(engine, name.c_str(), f.run_dir.empty() ? nullptr : f.run_dir.c_str(), nullptr, &dir);
    if (status == RC_OK) run_dir = take(dir);
  }
  rc_engine_destroy(engine);
  if (status != RC_OK) return fail(status);
  if (!run_dir.empty()) std::cout << run_dir << "\n";
  return kExitOk;
}

int stats_command(const std::string& input, const std::string& pooling, const std::string& output) {
  std::string text;
  if (!read_text(input, text)) {
    std::cerr << "reportcheck: cannot read " << input << "\n";
    return kExitConfig;
  }
  char* result = nullptr;
  rc_status status = rc_stats(text.c_str(), pooling.c_str(), &result);
  if (status != RC_OK) return fail(status);
  std::string json = take(result) + "\n";
  if (output.empty()) {
    std::cout << json;
  } else {
    std::ofstream out(output, std::ios::binary);
    if (!out) {
      std::cerr << "reportcheck: cannot write " << output << "\n";
      return kExitConfig;
    }
    out << json;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Claim verification and rubric scoring for research reports"};
  app.require_subcommand(1);

  RunFlags flags;
  const std::vector<std::pair<std::string, std::string>> run_commands{
      {"evaluate", "Run every stage and write manifest.json and summary.md"},
      {"ingest", "Segment the report and load task and taxonomy"},
      {"extract", "Extract and classify claims, resolve their evidence"},
      {"verify", "Fetch sources and verify claims against them"},
      {"metrics", "Compute information verification metrics"},
      {"score", "Judge the report against the rubric"},
  };
  std::vector<CLI::App*> run_subs;
  for (const auto& [name, help] : run_commands) {
    auto* sub = app.add_subcommand(name, help);
    add_run_flags(sub, flags);
    run_subs.push_back(sub);
  }

  std::string stats_input, pooling = "global", stats_output;
  auto* stats = app.add_subcommand("stats", "Agreement statistics over a score matrix");
  stats->add_option("--input", stats_input, "Score matrix JSON")->required();
  stats->add_option("--pooling", pooling, "global or per-task [global]")->check(CLI::IsMember({"global", "per-task"}));
  stats->add_option("--output", stats_output, "Write here instead of stdout");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Re-render summary.md from a run's manifest");
  report->add_option("--run-dir", report_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  for (std::size_t i = 0; i < run_subs.size(); ++i) {
    if (*run_subs[i]) return run_command(run_commands[i].first, run_subs[i], flags);
  }
  if (*stats) return stats_command(stats_input, pooling, stats_output);
  if (*report) {
    char* text = nullptr;
    rc_status status = rc_render_summary(report_dir.c_str(), &text);
    if (status != RC_OK) return fail(status);
    std::cout << take(text);
    return kExitOk;
  }
  return kExitConfig;
}
