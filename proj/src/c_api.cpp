#include "reportcheck/reportcheck.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <optional>
#include <string>

#include "reportcheck/agreement.hpp"
#include "reportcheck/error.hpp"
#include "reportcheck/pipeline.hpp"
#include "reportcheck/report_model.hpp"
#include "reportcheck/rubric.hpp"
#include "reportcheck/text.hpp"

struct rc_engine {
  nlohmann::json overrides;
  reportcheck::RunConfig config;
};

namespace {

thread_local std::string last_error;

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
rc_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return RC_OK;
  } catch (const reportcheck::Error& e) {
    last_error = e.what();
    return static_cast<rc_status>(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("schema_violation: ") + e.what();
    return RC_SCHEMA_VIOLATION;
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = std::string("io: ") + e.what();
    return RC_IO;
  } catch (const std::exception& e) {
    last_error = std::string("internal: ") + e.what();
    return RC_INTERNAL;
  } catch (...) {
    last_error = "internal: unknown exception";
    return RC_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw reportcheck::Error(reportcheck::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

nlohmann::json parse_arg(const char* text, const char* what) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    throw reportcheck::Error(reportcheck::ErrorCode::kInvalidArgument, std::string(what) + " is not valid JSON");
  }
  return j;
}

}  // namespace

extern "C" {

rc_status rc_engine_create(const char* config_json, rc_engine** out) {
  return guarded([&] {
    need(out, "out");
    nlohmann::json overrides = nlohmann::json::object();
    if (config_json != nullptr && *config_json != '\0') {
      overrides = nlohmann::json::parse(config_json, nullptr, false);
      if (overrides.is_discarded()) throw reportcheck::Error(reportcheck::ErrorCode::kConfig, "config is not valid JSON");
    }
    auto config = reportcheck::run_config_from_json(overrides);
    *out = new rc_engine{std::move(overrides), std::move(config)};
  });
}

void rc_engine_destroy(rc_engine* engine) { delete engine; }

rc_status rc_engine_config(const rc_engine* engine, char** config_json_out) {
  return guarded([&] {
    need(engine, "engine");
    need(config_json_out, "config_json_out");
    *config_json_out = dup(reportcheck::to_json(engine->config).dump(2));
  });
}

rc_status rc_run_evaluate(rc_engine* engine, char** manifest_json_out, char** run_dir_out) {
  return guarded([&] {
    need(engine, "engine");
    auto outcome = reportcheck::run_evaluate(engine->config);
    std::string manifest = outcome.manifest.dump(2);
    if (manifest_json_out != nullptr) *manifest_json_out = dup(manifest);
    if (run_dir_out != nullptr) *run_dir_out = dup(outcome.run_dir);
  });
}

rc_status rc_run_stage(rc_engine* engine, const char* stage, const char* run_dir, char** manifest_json_out,
                       char** run_dir_out) {
  return guarded([&] {
    need(engine, "engine");
    need(stage, "stage");
    auto s = reportcheck::parse_stage(stage);
    if (!s) throw reportcheck::Error(reportcheck::ErrorCode::kConfig, std::string("unknown stage \"") + stage + "\"");
    reportcheck::RunConfig config = engine->config;
    std::optional<nlohmann::json> prior;
    if (run_dir != nullptr && *run_dir != '\0') {
      std::string manifest_path = (std::filesystem::path(run_dir) / reportcheck::kManifestFile).string();
      if (std::filesystem::is_regular_file(manifest_path)) {
        prior = reportcheck::load_manifest(run_dir);
        nlohmann::json merged = prior->value("config", nlohmann::json::object());
        merged.erase("run_time");  // resolved per stage unless given again
        merged.merge_patch(engine->overrides);
        merged.erase("run_dir");
        merged.erase("run_root");
        config = reportcheck::run_config_from_json(merged);
      }
      config.run_dir = run_dir;
    }
    auto outcome = reportcheck::run_stage(*s, config, prior ? &*prior : nullptr);
    std::string manifest = outcome.manifest.dump(2);
    if (manifest_json_out != nullptr) *manifest_json_out = dup(manifest);
    if (run_dir_out != nullptr) *run_dir_out = dup(outcome.run_dir);
  });
}

rc_status rc_render_summary(const char* run_dir, char** summary_out) {
  return guarded([&] {
    need(run_dir, "run_dir");
    auto manifest = reportcheck::load_manifest(run_dir);
    std::string text = reportcheck::render_summary(manifest);
    reportcheck::write_file((std::filesystem::path(run_dir) / reportcheck::kSummaryFile).string(), text);
    if (summary_out != nullptr) *summary_out = dup(text);
  });
}

rc_status rc_segment(const char* markdown, char** document_json_out) {
  return guarded([&] {
    need(markdown, "markdown");
    need(document_json_out, "document_json_out");
    *document_json_out = dup(reportcheck::to_json(reportcheck::segment_report(markdown)).dump(2));
  });
}

rc_status rc_stats(const char* matrix_json, const char* pooling, char** stats_json_out) {
  return guarded([&] {
    need(matrix_json, "matrix_json");
    need(stats_json_out, "stats_json_out");
    auto p = reportcheck::parse_pooling(pooling == nullptr ? "global" : pooling);
    if (!p) throw reportcheck::Error(reportcheck::ErrorCode::kConfig, std::string("unknown pooling \"") + pooling + "\"");
    auto input = reportcheck::stats_input_from_json(parse_arg(matrix_json, "matrix_json"));
    *stats_json_out = dup(reportcheck::compute_stats(input, *p).dump(2));
  });
}

rc_status rc_aggregate(const char* taxonomy_path, const char* scores_json, char** aggregate_json_out) {
  return guarded([&] {
    need(taxonomy_path, "taxonomy_path");
    need(scores_json, "scores_json");
    need(aggregate_json_out, "aggregate_json_out");
    auto taxonomy = reportcheck::load_taxonomy(taxonomy_path);
    auto j = parse_arg(scores_json, "scores_json");
    if (!j.is_array()) throw reportcheck::Error(reportcheck::ErrorCode::kInvalidArgument, "scores must be a JSON array");
    std::vector<reportcheck::FactorScore> scores;
    for (const auto& s : j) scores.push_back(reportcheck::factor_score_from_json(s));
    *aggregate_json_out = dup(reportcheck::to_json(reportcheck::aggregate(scores, taxonomy), taxonomy).dump(2));
  });
}

const char* rc_last_error(void) { return last_error.c_str(); }

const char* rc_status_name(rc_status status) {
  if (status == RC_OK) return "ok";
  if (status == RC_INTERNAL) return "internal";
  if (status >= RC_INVALID_ARGUMENT && status <= RC_IO) {
    return reportcheck::error_code_name(static_cast<reportcheck::ErrorCode>(status)).data();
  }
  return "unknown";
}

void rc_string_free(char* s) { std::free(s); }

}  // extern "C"
