#include "reportcheck/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "http_transport.hpp"
#include "reportcheck/error.hpp"
#include "reportcheck/text.hpp"

namespace reportcheck {

std::string_view gateway_mode_name(GatewayMode mode) {
  switch (mode) {
    case GatewayMode::kLive: return "live";
    case GatewayMode::kRecord: return "record";
    case GatewayMode::kReplay: return "replay";
  }
  return "replay";
}

std::optional<GatewayMode> parse_gateway_mode(std::string_view name) {
  if (name == "live") return GatewayMode::kLive;
  if (name == "record") return GatewayMode::kRecord;
  if (name == "replay") return GatewayMode::kReplay;
  return std::nullopt;
}

namespace {

std::string normalize_newlines(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n') continue;
    out.push_back(text[i]);
  }
  return out;
}

nlohmann::json normalized_request(const ModelRequest& request) {
  char temp[32];
  std::snprintf(temp, sizeof temp, "%.6g", request.temperature);
  return {{"model", request.model},
          {"schema", request.expected_schema ? nlohmann::json(*request.expected_schema)
                                             : nlohmann::json(nullptr)},
          {"system", normalize_newlines(request.system_text)},
          {"temperature", temp},
          {"user", normalize_newlines(request.user_text)}};
}

}  // namespace

std::string fingerprint(const ModelRequest& request) {
  return sha256_hex(normalized_request(request).dump());
}

nlohmann::json to_json(const ModelResponse& r) {
  return {{"text", r.text},
          {"input_tokens", r.input_tokens},
          {"output_tokens", r.output_tokens},
          {"cost_usd", r.cost_usd},
          {"latency_ms", r.latency_ms},
          {"unpriced", r.unpriced}};
}

ModelResponse response_from_json(const nlohmann::json& j) {
  ModelResponse r;
  r.text = j.at("text").get<std::string>();
  r.input_tokens = j.value("input_tokens", std::int64_t{0});
  r.output_tokens = j.value("output_tokens", std::int64_t{0});
  r.cost_usd = j.value("cost_usd", 0.0);
  r.latency_ms = j.value("latency_ms", std::int64_t{0});
  r.unpriced = j.value("unpriced", false);
  return r;
}

// ---------------------------------------------------------------------------

HttpChatBackend::HttpChatBackend(std::string endpoint, std::string api_key_env, int timeout_seconds)
    : endpoint_(std::move(endpoint)),
      api_key_env_(std::move(api_key_env)),
      timeout_seconds_(timeout_seconds) {}

BackendReply HttpChatBackend::send(const ModelRequest& request) {
  nlohmann::json body = {
      {"model", request.model},
      {"temperature", request.temperature},
      {"max_tokens", request.max_output_tokens},
      {"messages",
       {{{"role", "system"}, {"content", request.system_text}},
        {{"role", "user"}, {"content", request.user_text}}}}};
  if (request.expected_schema) body["response_format"] = {{"type", "json_object"}};

  std::map<std::string, std::string> headers;
  if (const char* key = std::getenv(api_key_env_.c_str()); key != nullptr && *key != '\0') {
    headers["Authorization"] = std::string("Bearer ") + key;
  }
  auto res = detail::http_post(endpoint_, body.dump(), headers, timeout_seconds_);
  if (res.status == 429) throw Error(ErrorCode::kRateLimited, endpoint_);
  if (res.status >= 500) {
    throw Error(ErrorCode::kTransport, endpoint_ + " returned " + std::to_string(res.status));
  }
  if (res.status != 200) {
    throw Error(ErrorCode::kConfig, endpoint_ + " returned " + std::to_string(res.status) + ": " +
                                        res.body.substr(0, 200));
  }
  try {
    auto j = nlohmann::json::parse(res.body);
    BackendReply reply;
    reply.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (j.contains("usage")) {
      reply.input_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
      reply.output_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
    }
    return reply;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kTransport, std::string("unexpected completion payload: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

ReplayStore::ReplayStore(std::string path) : path_(std::move(path)) {}

std::shared_ptr<ReplayStore> ReplayStore::open(const std::string& path) {
  auto store = std::make_shared<ReplayStore>(path);
  std::ifstream in(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      store->entries_[j.at("fingerprint").get<std::string>()] = response_from_json(j.at("response"));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfig,
                  path + ":" + std::to_string(line_no) + ": bad replay entry: " + e.what());
    }
  }
  return store;
}

std::optional<ModelResponse> ReplayStore::find(const std::string& fp) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(fp);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ReplayStore::put(const ModelRequest& request, const ModelResponse& response) {
  std::string fp = fingerprint(request);
  nlohmann::json line = {{"fingerprint", fp},
                         {"request", normalized_request(request)},
                         {"response", to_json(response)}};
  std::lock_guard lock(mutex_);
  entries_[fp] = response;
  if (!path_.empty()) append_line(path_, line.dump());
}

std::size_t ReplayStore::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------

void CallLedger::add(CallRecord record) {
  std::lock_guard lock(mutex_);
  records_.push_back(std::move(record));
}

std::vector<CallRecord> CallLedger::records() const {
  std::lock_guard lock(mutex_);
  auto out = records_;
  std::sort(out.begin(), out.end(), [](const CallRecord& a, const CallRecord& b) {
    return std::tie(a.stage, a.fingerprint, a.attempts) < std::tie(b.stage, b.fingerprint, b.attempts);
  });
  return out;
}

std::size_t CallLedger::calls(std::string_view stage) const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(),
                                                [&](const CallRecord& r) { return r.stage == stage; }));
}

std::size_t CallLedger::total_calls() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

double CallLedger::total_cost() const {
  double total = 0.0;
  for (const auto& r : records()) total += r.cost_usd;
  return total;
}

nlohmann::json CallLedger::summary() const {
  struct Totals {
    std::int64_t calls = 0, attempts = 0, input = 0, output = 0, unpriced = 0;
    double cost = 0.0;
  };
  std::map<std::string, Totals> stages;
  Totals all;
  for (const auto& r : records()) {
    for (Totals* t : {&stages[r.stage], &all}) {
      t->calls += 1;
      t->attempts += r.attempts;
      t->input += r.input_tokens;
      t->output += r.output_tokens;
      t->cost += r.cost_usd;
      t->unpriced += r.unpriced ? 1 : 0;
    }
  }
  auto render = [](const Totals& t) {
    return nlohmann::json{{"calls", t.calls},         {"attempts", t.attempts},
                          {"input_tokens", t.input},  {"output_tokens", t.output},
                          {"cost_usd", t.cost},       {"unpriced_calls", t.unpriced}};
  };
  nlohmann::json out = {{"total", render(all)}, {"stages", nlohmann::json::object()}};
  for (const auto& [name, t] : stages) out["stages"][name] = render(t);
  return out;
}

// ---------------------------------------------------------------------------

Gateway::Gateway(GatewayOptions options, std::shared_ptr<ModelBackend> backend,
                 std::shared_ptr<ReplayStore> store)
    : options_(std::move(options)),
      backend_(std::move(backend)),
      store_(std::move(store)),
      sleeper_([](int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); }) {
  if (!store_) store_ = std::make_shared<ReplayStore>();
  if (options_.mode != GatewayMode::kReplay && !backend_) {
    throw Error(ErrorCode::kConfig, "live and record gateway modes need a model backend");
  }
}

ModelResponse Gateway::call_backend(const ModelRequest& request, int& attempts) {
  int delay = options_.backoff_initial_ms;
  for (attempts = 1;; ++attempts) {
    auto start = std::chrono::steady_clock::now();
    try {
      BackendReply reply = backend_->send(request);
      ModelResponse response;
      response.text = std::move(reply.text);
      response.input_tokens = reply.input_tokens;
      response.output_tokens = reply.output_tokens;
      response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - start)
                                .count();
      auto price = options_.prices.find(request.model);
      if (price == options_.prices.end()) {
        response.unpriced = true;
        std::lock_guard lock(warn_mutex_);
        if (warned_models_.insert(request.model).second) {
          std::cerr << ("warning: no price configured for model '" + request.model + "'\n") << std::flush;
        }
      } else {
        response.cost_usd = static_cast<double>(response.input_tokens) * price->second.rate_in +
                            static_cast<double>(response.output_tokens) * price->second.rate_out;
      }
      return response;
    } catch (const Error& e) {
      if (!e.retryable() || attempts > options_.retry_budget) throw;
      sleeper_(delay);
      delay *= 2;
    }
  }
}

ModelResponse Gateway::complete(const ModelRequest& request, std::string_view stage) {
  if (trim(request.user_text).empty()) {
    throw Error(ErrorCode::kInvalidArgument, "model request with empty user text");
  }
  std::string fp = fingerprint(request);
  ModelResponse response;
  int attempts = 1;
  if (options_.mode == GatewayMode::kReplay) {
    auto stored = store_->find(fp);
    if (!stored) {
      throw Error(ErrorCode::kReplayMiss,
                  "no replay entry for " + fp.substr(0, 16) + " (stage " + std::string(stage) + ")");
    }
    response = std::move(*stored);
  } else {
    response = call_backend(request, attempts);
    if (options_.mode == GatewayMode::kRecord) store_->put(request, response);
  }
  ledger_.add(CallRecord{std::string(stage), fp, request.model, response.input_tokens,
                         response.output_tokens, response.cost_usd, attempts, response.unpriced});
  return response;
}

// ---------------------------------------------------------------------------

nlohmann::json parse_model_json(std::string_view text) {
  auto attempt = [](std::string_view s) -> std::optional<nlohmann::json> {
    auto j = nlohmann::json::parse(s.begin(), s.end(), nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
  };
  std::string_view body = trim(text);
  if (auto j = attempt(body)) return *j;
  // Strip a markdown code fence.
  if (body.starts_with("```")) {
    auto first_nl = body.find('\n');
    auto last_fence = body.rfind("```");
    if (first_nl != std::string_view::npos && last_fence > first_nl) {
      if (auto j = attempt(body.substr(first_nl + 1, last_fence - first_nl - 1))) return *j;
    }
  }
  auto open = body.find_first_of("{[");
  if (open != std::string_view::npos) {
    char closer = body[open] == '{' ? '}' : ']';
    auto close = body.rfind(closer);
    if (close != std::string_view::npos && close > open) {
      if (auto j = attempt(body.substr(open, close - open + 1))) return *j;
    }
  }
  throw Error(ErrorCode::kMalformedOutput, "model output is not JSON");
}

}  // namespace reportcheck
