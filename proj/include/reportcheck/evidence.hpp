#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reportcheck/claims.hpp"
#include "reportcheck/report_model.hpp"

namespace reportcheck {

enum class FetchStatus { kOk, kHttpError, kTimeout, kUnreachable, kNonText };

std::string_view fetch_status_name(FetchStatus status);
std::optional<FetchStatus> parse_fetch_status(std::string_view name);

struct FetchedSource {
  CitationKey key = 0;
  std::string url;
  FetchStatus status = FetchStatus::kUnreachable;
  int http_code = 0;  // set for kHttpError and kOk
  std::string content_markdown;
  std::string fetched_at;  // ISO-8601 UTC
  std::string content_hash;

  bool ok() const { return status == FetchStatus::kOk; }
};

nlohmann::json to_json(const FetchedSource& source);
FetchedSource fetched_source_from_json(const nlohmann::json& j);

struct Page {
  int status = 0;
  std::string body;
  std::string content_type;
};

// Raw page transport. Throws Error(kTimeout) / Error(kTransport).
class PageGetter {
 public:
  virtual ~PageGetter() = default;
  virtual Page get(const std::string& url) = 0;
};

class HttpPageGetter : public PageGetter {
 public:
  explicit HttpPageGetter(int timeout_seconds = 20) : timeout_seconds_(timeout_seconds) {}
  Page get(const std::string& url) override;

 private:
  int timeout_seconds_;
};

class MarkdownConverter {
 public:
  virtual ~MarkdownConverter() = default;
  virtual std::string convert(const std::string& html, const std::string& url) = 0;
};

// Tag stripper keeping headings, paragraphs and list items.
class BuiltinConverter : public MarkdownConverter {
 public:
  std::string convert(const std::string& html, const std::string& url) override;
};

// POSTs {"url", "html"} and reads {"markdown"} (or a plain-text body).
class EndpointConverter : public MarkdownConverter {
 public:
  explicit EndpointConverter(std::string endpoint, int timeout_seconds = 60)
      : endpoint_(std::move(endpoint)), timeout_seconds_(timeout_seconds) {}
  std::string convert(const std::string& html, const std::string& url) override;

 private:
  std::string endpoint_;
  int timeout_seconds_;
};

std::string html_to_markdown(std::string_view html);

enum class FetchMode { kLive, kRecord, kReplay };

struct FetchOptions {
  FetchMode mode = FetchMode::kReplay;
  std::string cache_dir;      // live/record: one JSON file per URL and UTC day
  std::string snapshot_path;  // record writes, replay reads (JSONL keyed by URL)
  int retries = 2;
  int backoff_initial_ms = 500;
  std::size_t max_in_flight = 4;
  int politeness_ms = 250;  // minimum gap between requests to one host
};

class Fetcher {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;
  using Sleeper = std::function<void(int milliseconds)>;

  Fetcher(FetchOptions options, std::shared_ptr<PageGetter> getter,
          std::shared_ptr<MarkdownConverter> converter);

  // Network failures end up in the status. Replay misses throw
  // Error(kReplayMiss).
  FetchedSource fetch(const ReferenceEntry& entry);

  // Every reference of the document, ordered by key.
  std::vector<FetchedSource> fetch_all(const ReportDocument& doc);

  std::size_t network_calls() const { return network_calls_; }
  void set_clock(Clock clock) { clock_ = std::move(clock); }
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

 private:
  FetchedSource fetch_network(const ReferenceEntry& entry);
  Page get_with_retries(const std::string& url, FetchStatus& failure);
  void wait_for_host(const std::string& url);
  std::string cache_path(const std::string& url) const;

  FetchOptions options_;
  std::shared_ptr<PageGetter> getter_;
  std::shared_ptr<MarkdownConverter> converter_;
  Clock clock_;
  Sleeper sleeper_;
  std::mutex mutex_;  // snapshot, cache writes, host table
  std::map<std::string, FetchedSource> snapshot_;
  std::map<std::string, std::chrono::steady_clock::time_point> last_hit_;
  std::atomic<std::size_t> network_calls_{0};
};

struct Chunk {
  CitationKey source_key = 0;
  int chunk_index = 1;
  std::string text;
  int token_count = 0;  // whitespace-delimited tokens
};

nlohmann::json to_json(const Chunk& chunk);

// Greedy packing of whole paragraphs up to target_tokens; a paragraph longer
// than the target is cut at token boundaries. Concatenating the chunk texts
// gives back the source content. Error(kNotFetched) unless the source is ok.
std::vector<Chunk> chunk_source(const FetchedSource& source, int target_tokens = 1000);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// One score per pool entry.
std::vector<double> bm25_scores(std::string_view query, const std::vector<Chunk>& pool,
                                Bm25Params params = {});

inline constexpr std::size_t kAllChunks = std::numeric_limits<std::size_t>::max();

struct ChunkScore {
  CitationKey source_key = 0;
  int chunk_index = 1;
  double score = 0.0;
};

struct ContextSelection {
  ClaimId claim_id;
  std::vector<Chunk> selected;     // pool order
  std::vector<ChunkScore> scores;  // every pool entry, pool order
  std::size_t budget_n = kAllChunks;
};

// Top n of the pool by BM25, ties to the earlier pool entry, returned in pool
// order. n == kAllChunks keeps everything (retrieval off).
ContextSelection select_context(std::string_view claim_text, const std::vector<Chunk>& pool, std::size_t n);

// Chunks of the cited sources, ordered by (source key, chunk index).
std::vector<Chunk> candidate_pool(const std::set<CitationKey>& citations,
                                  const std::map<CitationKey, std::vector<Chunk>>& chunks_by_source);

nlohmann::json to_json(const ContextSelection& selection);

}  // namespace reportcheck
