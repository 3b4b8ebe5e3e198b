#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include <unistd.h>

#include "reportcheck/error.hpp"
#include "reportcheck/evidence.hpp"
#include "reportcheck/text.hpp"
#include "support/bm25_oracle.hpp"

using namespace reportcheck;
using testsupport::oracle_bm25;

namespace {

// Scripted pages per URL; a missing URL times out.
class MapGetter : public PageGetter {
 public:
  std::map<std::string, Page> pages;
  std::atomic<int> calls{0};
  Page get(const std::string& url) override {
    ++calls;
    auto it = pages.find(url);
    if (it == pages.end()) throw Error(ErrorCode::kTimeout, url);
    return it->second;
  }
};

std::chrono::system_clock::time_point fixed_day() {
  return std::chrono::system_clock::from_time_t(1714564800);  // 2024-05-01T12:00:00Z
}

std::string temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rc_evidence_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

ReferenceEntry ref(int key, std::string url) {
  ReferenceEntry e;
  e.key = key;
  e.url = std::move(url);
  return e;
}

std::unique_ptr<Fetcher> make_fetcher(FetchOptions opts, std::shared_ptr<PageGetter> getter) {
  opts.politeness_ms = 0;
  auto f = std::make_unique<Fetcher>(opts, std::move(getter), nullptr);
  f->set_clock(fixed_day);
  f->set_sleeper([](int) {});
  return f;
}

std::string words(int n, const std::string& w = "tok") {
  std::string out;
  for (int i = 0; i < n; ++i) out += (i ? " " : "") + w + std::to_string(i);
  return out;
}

FetchedSource ok_source(std::string content, int key = 1) {
  FetchedSource s;
  s.key = key;
  s.url = "https://x.example/" + std::to_string(key);
  s.status = FetchStatus::kOk;
  s.content_markdown = std::move(content);
  return s;
}

Chunk chunk(int key, int index, std::string text) {
  return Chunk{key, index, text, static_cast<int>(whitespace_token_count(text))};
}

}  // namespace

TEST_CASE("fetch status encoding") {
  auto getter = std::make_shared<MapGetter>();
  getter->pages["https://a.example/missing"] = {404, "nope", "text/html"};
  getter->pages["https://a.example/paper.pdf"] = {200, std::string("%PDF\0bin", 8), "application/pdf"};
  getter->pages["https://a.example/page"] = {200, "<html><head><title>t</title></head><body><h1>Title</h1>"
                                                  "<p>Alpha &amp; beta.</p><script>x()</script></body></html>",
                                             "text/html; charset=utf-8"};
  auto fp = make_fetcher({.mode = FetchMode::kLive}, getter);
  auto& f = *fp;

  auto missing = f.fetch(ref(1, "https://a.example/missing"));
  CHECK(missing.status == FetchStatus::kHttpError);
  CHECK(missing.http_code == 404);
  CHECK(missing.content_markdown.empty());

  CHECK(f.fetch(ref(2, "https://a.example/paper.pdf")).status == FetchStatus::kNonText);

  auto page = f.fetch(ref(3, "https://a.example/page"));
  CHECK(page.ok());
  CHECK(page.content_markdown == "# Title\n\nAlpha & beta.\n");
  CHECK(page.content_hash == sha256_hex(page.content_markdown));
  CHECK(page.fetched_at == "2024-05-01T12:00:00Z");

  int before = getter->calls;
  auto slow = f.fetch(ref(4, "https://a.example/slow"));
  CHECK(slow.status == FetchStatus::kTimeout);
  CHECK(getter->calls - before == 3);  // one try plus two retries

  before = getter->calls;
  ReferenceEntry bad = ref(5, "");
  bad.unresolvable = true;
  CHECK(f.fetch(bad).status == FetchStatus::kUnreachable);
  CHECK(getter->calls == before);
}

TEST_CASE("cache hits are network-free and corruption refetches") {
  auto dir = temp_dir("cache");
  auto getter = std::make_shared<MapGetter>();
  getter->pages["https://a.example/doc"] = {200, "plain text body", "text/plain"};
  FetchOptions opts{.mode = FetchMode::kLive, .cache_dir = dir};
  auto first = make_fetcher(opts, getter)->fetch(ref(1, "https://a.example/doc"));
  CHECK(getter->calls == 1);
  auto second = make_fetcher(opts, getter)->fetch(ref(1, "https://a.example/doc"));
  CHECK(getter->calls == 1);
  CHECK(to_json(second) == to_json(first));

  for (const auto& entry : std::filesystem::directory_iterator(dir)) write_file(entry.path().string(), "{garbage");
  auto third = make_fetcher(opts, getter)->fetch(ref(1, "https://a.example/doc"));
  CHECK(getter->calls == 2);
  CHECK(third.content_markdown == "plain text body");
  std::filesystem::remove_all(dir);
}

TEST_CASE("record then replay without a network") {
  auto dir = temp_dir("snapshot");
  auto getter = std::make_shared<MapGetter>();
  std::string report = "Claim [1]. Claim [2].\n\n## References\n\n";
  for (int k = 1; k <= 10; ++k) {
    std::string url = "https://site" + std::to_string(k) + ".example/";
    report += "[" + std::to_string(k) + "] " + url + "\n";
    if (k != 4 && k != 9) getter->pages[url] = {200, "body " + std::to_string(k), "text/plain"};
    else getter->pages[url] = {500, "", "text/plain"};
  }
  auto doc = segment_report(report);
  FetchOptions rec{.mode = FetchMode::kRecord, .snapshot_path = dir + "/sources.jsonl"};
  auto recorded = make_fetcher(rec, getter)->fetch_all(doc);
  REQUIRE(recorded.size() == 10);
  int ok = 0;
  for (const auto& s : recorded) ok += s.ok();
  CHECK(static_cast<double>(ok) / recorded.size() == doctest::Approx(0.8));

  FetchOptions rep{.mode = FetchMode::kReplay, .snapshot_path = dir + "/sources.jsonl"};
  auto rp = make_fetcher(rep, nullptr);
  auto& replayer = *rp;
  auto replayed = replayer.fetch_all(doc);
  REQUIRE(replayed.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(to_json(replayed[i]) == to_json(recorded[i]));
  CHECK(replayer.network_calls() == 0);
  try {
    replayer.fetch(ref(11, "https://other.example/"));
    FAIL("expected replay miss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kReplayMiss);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("per-host politeness spaces out requests") {
  auto getter = std::make_shared<MapGetter>();
  getter->pages["https://h.example/a"] = {200, "a", "text/plain"};
  getter->pages["https://h.example/b"] = {200, "b", "text/plain"};
  Fetcher f({.mode = FetchMode::kLive, .politeness_ms = 400}, getter, nullptr);
  std::vector<int> waits;
  f.set_sleeper([&](int ms) { waits.push_back(ms); });
  f.fetch(ref(1, "https://h.example/a"));
  f.fetch(ref(2, "https://h.example/b"));
  REQUIRE(waits.size() == 1);
  CHECK(waits[0] > 300);
  CHECK(waits[0] <= 400);
}

TEST_CASE("html conversion keeps structure") {
  auto md = html_to_markdown(
      "<body><h2>Results</h2><ul><li>one</li><li>two &lt;3&gt;</li></ul>"
      "<!-- hidden --><style>p{}</style><p>caf&#233; &#x41;</p></body>");
  CHECK(md == "## Results\n\n- one\n- two <3>\n\ncafé A\n");
}

TEST_CASE("chunk packing arithmetic") {
  CHECK(chunk_source(ok_source(words(500))).size() == 1);
  auto big = chunk_source(ok_source(words(2500)));
  REQUIRE(big.size() == 3);
  CHECK(big[0].token_count + big[1].token_count + big[2].token_count == 2500);
  CHECK(big[0].token_count == 1000);
  std::string paras;
  for (int p = 0; p < 25; ++p) paras += words(100, "p" + std::to_string(p) + "w") + "\n\n";
  auto packed = chunk_source(ok_source(paras));
  REQUIRE(packed.size() == 3);
  CHECK(packed[0].token_count == 1000);
  CHECK(packed[2].token_count == 500);
  CHECK(packed[1].chunk_index == 2);
  FetchedSource failed;
  failed.status = FetchStatus::kHttpError;
  try {
    chunk_source(failed);
    FAIL("expected not_fetched");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNotFetched);
  }
}

TEST_CASE("property: chunking is lossless and bounded") {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text = rng() % 2 ? "\n  " : "";
    int paras = 1 + static_cast<int>(rng() % 12);
    for (int p = 0; p < paras; ++p) {
      int n = 1 + static_cast<int>(rng() % 400);
      for (int w = 0; w < n; ++w) text += "w" + std::to_string(rng() % 50) + (rng() % 9 ? " " : "\n");
      text += rng() % 2 ? "\n\n" : "\n \n\n";
    }
    int target = 20 + static_cast<int>(rng() % 300);
    auto chunks = chunk_source(ok_source(text), target);
    std::string joined;
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      joined += chunks[i].text;
      CHECK(chunks[i].chunk_index == static_cast<int>(i) + 1);
      CHECK(chunks[i].token_count == static_cast<int>(whitespace_token_count(chunks[i].text)));
      CHECK(chunks[i].token_count <= target);
      tokens += chunks[i].token_count;
    }
    CHECK(joined == text);
    CHECK(tokens == whitespace_token_count(text));
  }
}

TEST_CASE("bm25 selection matches the formula") {
  std::vector<Chunk> pool = {chunk(1, 1, "solar solar panel cost"), chunk(1, 2, "wind turbine output"),
                             chunk(2, 1, "solar farm land area")};
  auto scores = bm25_scores("solar", pool);
  auto oracle = oracle_bm25({"solar"}, {{"solar", "solar", "panel", "cost"},
                                        {"wind", "turbine", "output"},
                                        {"solar", "farm", "land", "area"}});
  for (std::size_t i = 0; i < 3; ++i) CHECK(scores[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
  CHECK(scores[0] > scores[2]);
  CHECK(scores[1] == 0.0);

  auto top1 = select_context("solar", pool, 1);
  REQUIRE(top1.selected.size() == 1);
  CHECK(top1.selected[0].chunk_index == 1);
  auto top2 = select_context("land area solar", pool, 2);
  REQUIRE(top2.selected.size() == 2);
  CHECK(top2.selected[0].source_key == 1);  // returned in pool order
  CHECK(top2.selected[1].source_key == 2);

  auto none = select_context("nuclear fusion", pool, 2);
  REQUIRE(none.selected.size() == 2);
  CHECK(none.selected[0].chunk_index == 1);
  CHECK(none.selected[1].chunk_index == 2);

  CHECK(select_context("x", {pool[1]}, 5).selected.size() == 1);
  CHECK(select_context("solar", pool, kAllChunks).selected.size() == 3);
  CHECK_THROWS_AS(select_context("solar", pool, 0), Error);
}

TEST_CASE("property: random pools against the oracle") {
  std::mt19937 rng(33);
  const std::vector<std::string> vocab = {"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Chunk> pool;
    std::vector<std::vector<std::string>> docs;
    int n = 1 + static_cast<int>(rng() % 8);
    for (int d = 0; d < n; ++d) {
      std::vector<std::string> toks;
      std::string text;
      int len = 1 + static_cast<int>(rng() % 30);
      for (int w = 0; w < len; ++w) {
        toks.push_back(vocab[rng() % vocab.size()]);
        text += toks.back() + " ";
      }
      docs.push_back(toks);
      pool.push_back(chunk(1 + d / 3, 1 + d % 3, text));
    }
    std::vector<std::string> query = {vocab[rng() % vocab.size()], vocab[rng() % vocab.size()]};
    if (query[0] == query[1]) query.pop_back();
    auto got = bm25_scores(query[0] + " " + (query.size() > 1 ? query[1] : ""), pool);
    auto want = oracle_bm25(query, docs);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    std::size_t budget = 1 + rng() % 4;
    auto sel = select_context(query[0], pool, budget);
    CHECK(sel.selected.size() == std::min<std::size_t>(budget, pool.size()));
    for (std::size_t i = 1; i < sel.selected.size(); ++i) {
      CHECK(std::tie(sel.selected[i - 1].source_key, sel.selected[i - 1].chunk_index) <
            std::tie(sel.selected[i].source_key, sel.selected[i].chunk_index));
    }
    CHECK(to_json(select_context(query[0], pool, budget)) == to_json(sel));
  }
}

TEST_CASE("candidate pool spans every cited source") {
  std::map<CitationKey, std::vector<Chunk>> by_source = {{2, {chunk(2, 1, "b1"), chunk(2, 2, "b2")}},
                                                        {1, {chunk(1, 1, "a1")}}};
  auto pool = candidate_pool({2, 1, 7}, by_source);
  REQUIRE(pool.size() == 3);
  CHECK(pool[0].source_key == 1);
  CHECK(pool[2].chunk_index == 2);
}
