#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reportcheck/error.hpp"

namespace reportcheck {

enum class GatewayMode { kLive, kRecord, kReplay };

std::string_view gateway_mode_name(GatewayMode mode);
std::optional<GatewayMode> parse_gateway_mode(std::string_view name);

struct ModelRequest {
  std::string model;
  std::string system_text;
  std::string user_text;
  std::optional<std::string> expected_schema;
  double temperature = 0.0;
  int max_output_tokens = 4096;
};

// SHA-256 over the normalized request (model, schema, system, temperature, user).
std::string fingerprint(const ModelRequest& request);

struct ModelResponse {
  std::string text;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  double cost_usd = 0.0;
  std::int64_t latency_ms = 0;
  bool unpriced = false;
};

nlohmann::json to_json(const ModelResponse& response);
ModelResponse response_from_json(const nlohmann::json& j);

// What a transport hands back before pricing.
struct BackendReply {
  std::string text;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
};

// Transport to a chat-completion service. Implementations throw Error with
// kTimeout / kTransport / kRateLimited for retryable failures.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual BackendReply send(const ModelRequest& request) = 0;
};

// OpenAI-style POST {endpoint} with a bearer token read from an env var.
class HttpChatBackend : public ModelBackend {
 public:
  HttpChatBackend(std::string endpoint, std::string api_key_env, int timeout_seconds = 120);
  BackendReply send(const ModelRequest& request) override;

 private:
  std::string endpoint_;
  std::string api_key_env_;
  int timeout_seconds_;
};

struct Price {
  double rate_in = 0.0;   // USD per input token
  double rate_out = 0.0;  // USD per output token
};

using PriceTable = std::map<std::string, Price, std::less<>>;

// Fingerprint -> response map persisted as append-only JSON lines.
class ReplayStore {
 public:
  ReplayStore() = default;
  explicit ReplayStore(std::string path);

  // Reads every line of path (later lines win). A missing file is empty.
  static std::shared_ptr<ReplayStore> open(const std::string& path);

  std::optional<ModelResponse> find(const std::string& fingerprint) const;
  void put(const ModelRequest& request, const ModelResponse& response);
  std::size_t size() const;

 private:
  std::string path_;
  mutable std::mutex mutex_;
  std::map<std::string, ModelResponse> entries_;
};

struct CallRecord {
  std::string stage;
  std::string fingerprint;
  std::string model;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  double cost_usd = 0.0;
  int attempts = 1;
  bool unpriced = false;
};

// Thread-safe log of every model call made through a gateway.
class CallLedger {
 public:
  void add(CallRecord record);
  std::vector<CallRecord> records() const;
  std::size_t calls(std::string_view stage) const;
  std::size_t total_calls() const;
  double total_cost() const;
  // Per-stage and total counts/tokens/cost. Sums run in a canonical order so
  // the result does not depend on call interleaving.
  nlohmann::json summary() const;

 private:
  mutable std::mutex mutex_;
  std::vector<CallRecord> records_;
};

struct GatewayOptions {
  GatewayMode mode = GatewayMode::kReplay;
  int retry_budget = 2;
  int backoff_initial_ms = 500;
  PriceTable prices;
};

class Gateway {
 public:
  using Sleeper = std::function<void(int milliseconds)>;

  Gateway(GatewayOptions options, std::shared_ptr<ModelBackend> backend,
          std::shared_ptr<ReplayStore> store);

  ModelResponse complete(const ModelRequest& request, std::string_view stage = "default");

  const CallLedger& ledger() const { return ledger_; }
  CallLedger& ledger() { return ledger_; }
  GatewayMode mode() const { return options_.mode; }
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

 private:
  ModelResponse call_backend(const ModelRequest& request, int& attempts);

  GatewayOptions options_;
  std::shared_ptr<ModelBackend> backend_;
  std::shared_ptr<ReplayStore> store_;
  CallLedger ledger_;
  Sleeper sleeper_;
  std::mutex warn_mutex_;
  std::set<std::string> warned_models_;
};

// Extracts the first JSON object/array from model text, tolerating code fences
// and surrounding prose. Throws Error(kMalformedOutput) when none parses.
nlohmann::json parse_model_json(std::string_view text);

// Sends request and hands the reply to parse(const ModelResponse&). When parse
// throws Error(kMalformedOutput) the model is asked again with the reason
// appended, up to retry_budget times. The number of re-asks goes to *reasks.
template <typename Parse>
auto complete_with_reask(Gateway& gw, ModelRequest request, std::string_view stage, int retry_budget,
                         Parse&& parse, int* reasks = nullptr) {
  const std::string original = request.user_text;
  for (int attempt = 0;; ++attempt) {
    ModelResponse response = gw.complete(request, stage);
    try {
      auto value = parse(response);
      if (reasks != nullptr) *reasks = attempt;
      return value;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kMalformedOutput) throw;
      if (attempt >= retry_budget) {
        throw Error(ErrorCode::kMalformedOutput,
                    e.detail() + " (after " + std::to_string(attempt) + " re-asks)");
      }
      request.user_text = original + "\n\nYour previous answer was rejected: " + e.detail() +
                          ". Reply again with only the JSON object in the required format.";
    }
  }
}

}  // namespace reportcheck
