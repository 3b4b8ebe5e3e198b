#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reportcheck/evidence.hpp"
#include "reportcheck/gateway.hpp"
#include "reportcheck/metrics.hpp"

namespace reportcheck {

struct TaskFile {
  std::string task_id;
  std::string domain;
  std::string query;
  std::string expert_guidance;
};

// Error(kConfig) naming the path when the file is missing, unparsable or has
// an empty query.
TaskFile load_task_file(const std::string& path);
TaskFile task_file_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TaskFile& task);

enum class Stage { kIngest, kExtract, kVerify, kMetrics, kScore };

inline constexpr std::array<Stage, 5> kAllStages{Stage::kIngest, Stage::kExtract, Stage::kVerify, Stage::kMetrics,
                                                 Stage::kScore};

std::string_view stage_name(Stage stage);
std::optional<Stage> parse_stage(std::string_view name);

struct RunConfig {
  std::string task_file;
  std::string report_file;
  std::string taxonomy_file;
  std::string run_root = "run";
  std::string run_dir;     // empty: run_root/<timestamp>
  std::string replay_dir;  // empty: run_dir/replay
  GatewayMode mode = GatewayMode::kReplay;
  std::string run_time;  // empty: now, or 1970-01-01T00:00:00Z in replay

  std::string extractor_model = "extractor";
  std::string verifier_model = "verifier";
  std::vector<std::string> judge_models{"judge"};

  int batch_size = 20;
  int group_size = 20;
  bool retrieval = true;
  int top_n = 5;
  int chunk_tokens = 1000;
  double tau = 0.9;
  bool use_guidance = true;
  bool transitive_backtracking = false;
  MetricsConfig metrics;

  int max_in_flight = 4;
  int retry_budget = 2;
  int backoff_initial_ms = 500;

  std::string endpoint;  // chat-completion URL for live/record
  std::string api_key_env = "REPORTCHECK_API_KEY";
  std::string converter_endpoint;  // empty: built-in HTML stripper
  PriceTable prices;               // USD per token
};

// Every field. Unknown keys and bad values raise Error(kConfig).
nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

// Prices file: {"model": {"input_per_mtok": 3.0, "output_per_mtok": 15.0}}.
PriceTable load_prices(const std::string& path);

// Ranges and the paths the given stage reads. Error(kConfig).
void validate_run_config(const RunConfig& config, Stage stage);

// "name = value" lines for printing at launch.
std::string describe_config(const RunConfig& config);

// Optional transports; null members are built from the config.
struct RunServices {
  std::shared_ptr<ModelBackend> backend;
  std::shared_ptr<PageGetter> getter;
  std::shared_ptr<MarkdownConverter> converter;
};

struct RunOutcome {
  nlohmann::json manifest;
  std::string run_dir;
};

inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kSummaryFile = "summary.md";

// Runs every stage in order, writing the manifest after each one and the
// summary at the end. A failing stage raises Error(kStageFailure) with the
// stage name; the manifest written so far stays on disk with "failed_stage".
RunOutcome run_evaluate(const RunConfig& config, const RunServices& services = {});

// Recomputes one stage on top of prior (null only for ingest) and drops the
// stages downstream of it. Error(kMissingUpstream) when prior lacks an input.
RunOutcome run_stage(Stage stage, const RunConfig& config, const nlohmann::json* prior,
                     const RunServices& services = {});

nlohmann::json load_manifest(const std::string& run_dir);

// Markdown tables built from the manifest alone.
std::string render_summary(const nlohmann::json& manifest);

}  // namespace reportcheck
