#include "reportcheck/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "http_transport.hpp"
#include "reportcheck/error.hpp"
#include "reportcheck/text.hpp"

namespace reportcheck {

std::string_view fetch_status_name(FetchStatus status) {
  switch (status) {
    case FetchStatus::kOk: return "ok";
    case FetchStatus::kHttpError: return "http_error";
    case FetchStatus::kTimeout: return "timeout";
    case FetchStatus::kUnreachable: return "unreachable";
    case FetchStatus::kNonText: return "non_text";
  }
  return "unreachable";
}

std::optional<FetchStatus> parse_fetch_status(std::string_view name) {
  for (auto s : {FetchStatus::kOk, FetchStatus::kHttpError, FetchStatus::kTimeout, FetchStatus::kUnreachable,
                 FetchStatus::kNonText}) {
    if (fetch_status_name(s) == name) return s;
  }
  return std::nullopt;
}

nlohmann::json to_json(const FetchedSource& s) {
  return {{"key", s.key},
          {"url", s.url},
          {"status", fetch_status_name(s.status)},
          {"http_code", s.http_code},
          {"content_markdown", s.content_markdown},
          {"fetched_at", s.fetched_at},
          {"content_hash", s.content_hash}};
}

FetchedSource fetched_source_from_json(const nlohmann::json& j) {
  try {
    FetchedSource s;
    s.key = j.at("key").get<int>();
    s.url = j.at("url").get<std::string>();
    auto status = parse_fetch_status(j.at("status").get<std::string>());
    if (!status) throw Error(ErrorCode::kSchemaViolation, "unknown fetch status");
    s.status = *status;
    s.http_code = j.value("http_code", 0);
    s.content_markdown = j.at("content_markdown").get<std::string>();
    s.fetched_at = j.value("fetched_at", std::string());
    s.content_hash = j.at("content_hash").get<std::string>();
    if (s.status != FetchStatus::kOk && !s.content_markdown.empty()) {
      throw Error(ErrorCode::kSchemaViolation, "content present on a failed fetch");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("source json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

Page HttpPageGetter::get(const std::string& url) {
  auto r = detail::http_get(url, timeout_seconds_);
  return {r.status, std::move(r.body), std::move(r.content_type)};
}

std::string BuiltinConverter::convert(const std::string& html, const std::string&) {
  return html_to_markdown(html);
}

std::string EndpointConverter::convert(const std::string& html, const std::string& url) {
  nlohmann::json body = {{"url", url}, {"html", html}};
  auto r = detail::http_post(endpoint_, body.dump(), {}, timeout_seconds_);
  if (r.status != 200) {
    throw Error(ErrorCode::kConfig, "converter " + endpoint_ + " returned " + std::to_string(r.status));
  }
  auto j = nlohmann::json::parse(r.body, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("markdown") && j["markdown"].is_string()) {
    return j["markdown"].get<std::string>();
  }
  return r.body;
}

namespace {

void append_utf8(std::string& out, unsigned long cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x110000) {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

void decode_entities(std::string_view text, std::string& out) {
  static const std::unordered_map<std::string_view, std::string_view> named = {
      {"amp", "&"}, {"lt", "<"}, {"gt", ">"}, {"quot", "\""}, {"apos", "'"}, {"nbsp", " "},
      {"ndash", "-"}, {"mdash", "-"}, {"hellip", "..."}, {"rsquo", "'"}, {"lsquo", "'"},
      {"ldquo", "\""}, {"rdquo", "\""}, {"copy", "(c)"}};
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '&') {
      out.push_back(text[i]);
      continue;
    }
    auto semi = text.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out.push_back('&');
      continue;
    }
    std::string_view name = text.substr(i + 1, semi - i - 1);
    if (name.size() > 1 && name[0] == '#') {
      bool hex = name[1] == 'x' || name[1] == 'X';
      std::string digits(name.substr(hex ? 2 : 1));
      char* end = nullptr;
      unsigned long cp = std::strtoul(digits.c_str(), &end, hex ? 16 : 10);
      if (!digits.empty() && end != nullptr && *end == '\0') {
        append_utf8(out, cp);
        i = semi;
        continue;
      }
    } else if (auto it = named.find(name); it != named.end()) {
      out += it->second;
      i = semi;
      continue;
    }
    out.push_back('&');
  }
}

bool is_block_tag(std::string_view tag) {
  static const std::set<std::string_view> blocks = {
      "p",  "div", "section", "article", "header", "footer", "main",   "nav", "aside", "table",
      "tr", "ul",  "ol",      "blockquote", "pre", "figure", "figcaption", "form", "hr", "dl",
      "dt", "dd",  "body",    "html",   "address", "caption"};
  return blocks.count(tag) > 0;
}

// Collapses spaces inside lines, drops empty markers and squeezes blank lines.
std::string tidy_lines(const std::string& raw) {
  std::string out;
  bool pending_blank = false;
  std::size_t start = 0;
  while (start <= raw.size()) {
    auto nl = raw.find('\n', start);
    if (nl == std::string::npos) nl = raw.size();
    std::string line;
    bool space = false;
    for (char c : std::string_view(raw).substr(start, nl - start)) {
      if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
        space = !line.empty();
      } else {
        if (space) line.push_back(' ');
        line.push_back(c);
        space = false;
      }
    }
    bool marker_only = !line.empty() && line.find_first_not_of("#-") == std::string::npos;
    if (line.empty() || marker_only) {
      pending_blank = !out.empty();
    } else {
      if (pending_blank) out += "\n";
      out += line;
      out += "\n";
      pending_blank = false;
    }
    start = nl + 1;
  }
  return out;
}

}  // namespace

std::string html_to_markdown(std::string_view html) {
  static const std::set<std::string_view> skipped = {"script", "style", "noscript", "head", "svg", "template"};
  std::string raw;
  std::size_t i = 0;
  while (i < html.size()) {
    if (html.compare(i, 4, "<!--") == 0) {
      auto end = html.find("-->", i + 4);
      i = end == std::string_view::npos ? html.size() : end + 3;
      continue;
    }
    if (html[i] != '<') {
      auto next = html.find('<', i);
      if (next == std::string_view::npos) next = html.size();
      std::string_view text = html.substr(i, next - i);
      std::string flat(text);
      std::replace(flat.begin(), flat.end(), '\n', ' ');
      decode_entities(flat, raw);
      i = next;
      continue;
    }
    auto close = html.find('>', i);
    if (close == std::string_view::npos) break;
    std::string_view inner = html.substr(i + 1, close - i - 1);
    bool closing = !inner.empty() && inner[0] == '/';
    if (closing) inner.remove_prefix(1);
    std::size_t name_end = 0;
    while (name_end < inner.size() && std::isalnum(static_cast<unsigned char>(inner[name_end]))) ++name_end;
    std::string tag = to_lower(inner.substr(0, name_end));
    i = close + 1;
    if (!closing && skipped.count(tag)) {
      auto end = to_lower(html.substr(i)).find("</" + tag);
      if (end == std::string::npos) break;
      auto gt = html.find('>', i + end);
      i = gt == std::string_view::npos ? html.size() : gt + 1;
      continue;
    }
    if (tag.size() == 2 && tag[0] == 'h' && tag[1] >= '1' && tag[1] <= '6') {
      raw += "\n\n";
      if (!closing) raw += std::string(static_cast<std::size_t>(tag[1] - '0'), '#') + " ";
    } else if (tag == "li") {
      if (!closing) raw += "\n- ";
    } else if (tag == "br") {
      raw += "\n";
    } else if (tag == "td" || tag == "th") {
      raw += " ";
    } else if (is_block_tag(tag)) {
      raw += "\n\n";
    }
  }
  return tidy_lines(raw);
}

// ---------------------------------------------------------------------------

namespace {

std::string host_of(const std::string& url) {
  auto scheme = url.find("://");
  std::size_t start = scheme == std::string::npos ? 0 : scheme + 3;
  auto end = url.find_first_of("/?#", start);
  return to_lower(url.substr(start, end == std::string::npos ? std::string::npos : end - start));
}

bool is_html_type(std::string_view ct) {
  return ct.find("html") != std::string_view::npos;
}

bool is_text_type(std::string_view ct) {
  return ct.empty() || ct.starts_with("text/") || ct.find("json") != std::string_view::npos ||
         ct.find("xml") != std::string_view::npos || ct.find("markdown") != std::string_view::npos;
}

}  // namespace

Fetcher::Fetcher(FetchOptions options, std::shared_ptr<PageGetter> getter,
                 std::shared_ptr<MarkdownConverter> converter)
    : options_(std::move(options)),
      getter_(std::move(getter)),
      converter_(std::move(converter)),
      clock_([] { return std::chrono::system_clock::now(); }),
      sleeper_([](int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); }) {
  if (!converter_) converter_ = std::make_shared<BuiltinConverter>();
  if (options_.mode != FetchMode::kReplay && !getter_) {
    throw Error(ErrorCode::kConfig, "live and record fetch modes need a page getter");
  }
  if (options_.mode != FetchMode::kLive && !options_.snapshot_path.empty()) {
    std::ifstream in(options_.snapshot_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        throw Error(ErrorCode::kConfig, options_.snapshot_path + ":" + std::to_string(line_no) +
                                            ": bad source snapshot line");
      }
      auto source = fetched_source_from_json(j);
      snapshot_[source.url] = std::move(source);
    }
  }
}

void Fetcher::wait_for_host(const std::string& url) {
  if (options_.politeness_ms <= 0) return;
  auto gap = std::chrono::milliseconds(options_.politeness_ms);
  std::chrono::steady_clock::time_point slot;
  auto now = std::chrono::steady_clock::now();
  {
    std::lock_guard lock(mutex_);
    auto& last = last_hit_[host_of(url)];
    slot = last.time_since_epoch().count() == 0 ? now : std::max(now, last + gap);
    last = slot;
  }
  auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(slot - now).count();
  if (wait > 0) sleeper_(static_cast<int>(wait));
}

Page Fetcher::get_with_retries(const std::string& url, FetchStatus& failure) {
  int delay = options_.backoff_initial_ms;
  for (int attempt = 0;; ++attempt) {
    wait_for_host(url);
    ++network_calls_;
    bool last = attempt >= options_.retries;
    try {
      Page page = getter_->get(url);
      if ((page.status == 429 || page.status >= 500) && !last) {
        sleeper_(delay);
        delay *= 2;
        continue;
      }
      return page;
    } catch (const Error& e) {
      failure = e.code() == ErrorCode::kTimeout ? FetchStatus::kTimeout : FetchStatus::kUnreachable;
      if (last) return Page{};
      sleeper_(delay);
      delay *= 2;
    }
  }
}

FetchedSource Fetcher::fetch_network(const ReferenceEntry& entry) {
  FetchedSource s;
  s.key = entry.key;
  s.url = entry.url;
  s.fetched_at = utc_timestamp(clock_());
  FetchStatus failure = FetchStatus::kUnreachable;
  Page page = get_with_retries(entry.url, failure);
  if (page.status == 0) {
    s.status = failure;
  } else if (page.status < 200 || page.status >= 300) {
    s.status = FetchStatus::kHttpError;
    s.http_code = page.status;
  } else {
    s.http_code = page.status;
    std::string ct = to_lower(trim(page.content_type.substr(0, page.content_type.find(';'))));
    bool binary = page.body.find('\0') != std::string::npos;
    if (binary || !is_text_type(ct)) {
      s.status = FetchStatus::kNonText;
    } else {
      s.status = FetchStatus::kOk;
      s.content_markdown = is_html_type(ct) ? converter_->convert(page.body, entry.url) : page.body;
    }
  }
  s.content_hash = sha256_hex(s.content_markdown);
  return s;
}

std::string Fetcher::cache_path(const std::string& url) const {
  return options_.cache_dir + "/" + sha256_hex(url + "\n" + utc_date(clock_())) + ".json";
}

FetchedSource Fetcher::fetch(const ReferenceEntry& entry) {
  if (entry.unresolvable || entry.url.empty()) {
    FetchedSource s;
    s.key = entry.key;
    s.url = entry.url;
    s.status = FetchStatus::kUnreachable;
    s.fetched_at = utc_timestamp(clock_());
    s.content_hash = sha256_hex("");
    return s;
  }
  if (options_.mode == FetchMode::kReplay) {
    std::lock_guard lock(mutex_);
    auto it = snapshot_.find(entry.url);
    if (it == snapshot_.end()) throw Error(ErrorCode::kReplayMiss, "no source snapshot for " + entry.url);
    FetchedSource s = it->second;
    s.key = entry.key;
    return s;
  }

  std::optional<FetchedSource> result;
  std::string path;
  if (!options_.cache_dir.empty()) {
    path = cache_path(entry.url);
    std::ifstream in(path, std::ios::binary);
    if (in) {
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      auto j = nlohmann::json::parse(bytes, nullptr, false);
      try {
        if (!j.is_discarded()) {
          auto cached = fetched_source_from_json(j);
          if (cached.url == entry.url && cached.content_hash == sha256_hex(cached.content_markdown)) {
            result = std::move(cached);
          }
        }
      } catch (const Error&) {
        // corrupt entry, refetch below
      }
    }
  }
  if (!result) {
    result = fetch_network(entry);
    if (!path.empty()) {
      std::lock_guard lock(mutex_);
      std::filesystem::create_directories(options_.cache_dir);
      std::string tmp = path + ".tmp";
      write_file(tmp, to_json(*result).dump());
      std::filesystem::rename(tmp, path);
    }
  }
  result->key = entry.key;
  if (options_.mode == FetchMode::kRecord) {
    std::lock_guard lock(mutex_);
    snapshot_[result->url] = *result;
    if (!options_.snapshot_path.empty()) append_line(options_.snapshot_path, to_json(*result).dump());
  }
  return *result;
}

std::vector<FetchedSource> Fetcher::fetch_all(const ReportDocument& doc) {
  std::vector<const ReferenceEntry*> entries;
  for (const auto& [key, entry] : doc.references) entries.push_back(&entry);
  std::vector<FetchedSource> out(entries.size());
  parallel_for(entries.size(), std::max<std::size_t>(1, options_.max_in_flight),
               [&](std::size_t i) { out[i] = fetch(*entries[i]); });
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const Chunk& c) {
  return {{"source_key", c.source_key}, {"chunk_index", c.chunk_index}, {"token_count", c.token_count}};
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Paragraphs with their trailing blank-line separators attached. Leading
// whitespace stays with the first paragraph.
std::vector<std::string_view> paragraphs(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_space(text[i])) {
      ++i;
      continue;
    }
    std::size_t run = i;
    int newlines = 0;
    while (i < text.size() && is_space(text[i])) newlines += text[i++] == '\n';
    bool has_content = false;
    for (std::size_t k = start; k < run; ++k) has_content = has_content || !is_space(text[k]);
    if (newlines >= 2 && has_content) {
      out.push_back(text.substr(start, i - start));
      start = i;
    }
  }
  if (start < text.size()) {
    std::string_view rest = text.substr(start);
    if (!out.empty() && whitespace_token_count(rest) == 0) {
      out.back() = text.substr(out.back().data() - text.data(), text.size() - (out.back().data() - text.data()));
    } else {
      out.push_back(rest);
    }
  }
  return out;
}

// Cuts after every max_tokens-th token, keeping the whitespace that follows it.
std::vector<std::string_view> split_tokens(std::string_view text, int max_tokens) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  std::size_t i = 0;
  int tokens = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) break;
    while (i < text.size() && !is_space(text[i])) ++i;
    ++tokens;
    if (tokens == max_tokens) {
      while (i < text.size() && is_space(text[i])) ++i;
      out.push_back(text.substr(start, i - start));
      start = i;
      tokens = 0;
    }
  }
  if (start < text.size()) {
    if (!out.empty() && tokens == 0) {
      auto first = out.back().data() - text.data();
      out.back() = text.substr(first);
    } else {
      out.push_back(text.substr(start));
    }
  }
  return out;
}

}  // namespace

std::vector<Chunk> chunk_source(const FetchedSource& source, int target_tokens) {
  if (!source.ok()) {
    throw Error(ErrorCode::kNotFetched,
                "source [" + std::to_string(source.key) + "] status " + std::string(fetch_status_name(source.status)));
  }
  if (target_tokens < 1) throw Error(ErrorCode::kInvalidArgument, "target_tokens must be >= 1");
  std::vector<Chunk> chunks;
  std::string text;
  int tokens = 0;
  auto flush = [&] {
    if (text.empty()) return;
    chunks.push_back(Chunk{source.key, static_cast<int>(chunks.size()) + 1, std::move(text), tokens});
    text.clear();
    tokens = 0;
  };
  auto add = [&](std::string_view piece) {
    int n = static_cast<int>(whitespace_token_count(piece));
    if (tokens > 0 && tokens + n > target_tokens) flush();
    text += piece;
    tokens += n;
  };
  for (std::string_view para : paragraphs(source.content_markdown)) {
    if (static_cast<int>(whitespace_token_count(para)) > target_tokens) {
      for (std::string_view piece : split_tokens(para, target_tokens)) add(piece);
    } else {
      add(para);
    }
  }
  flush();
  return chunks;
}

std::vector<double> bm25_scores(std::string_view query, const std::vector<Chunk>& pool, Bm25Params params) {
  std::vector<double> scores(pool.size(), 0.0);
  if (pool.empty()) return scores;
  std::vector<std::string> terms;
  for (auto& t : word_tokens(query)) {
    if (std::find(terms.begin(), terms.end(), t) == terms.end()) terms.push_back(std::move(t));
  }
  std::vector<std::unordered_map<std::string, int>> tf(pool.size());
  std::vector<double> length(pool.size());
  for (std::size_t d = 0; d < pool.size(); ++d) {
    auto tokens = word_tokens(pool[d].text);
    length[d] = static_cast<double>(tokens.size());
    for (auto& t : tokens) ++tf[d][t];
  }
  double avgdl = std::accumulate(length.begin(), length.end(), 0.0) / static_cast<double>(pool.size());
  if (avgdl == 0.0) return scores;
  auto n = static_cast<double>(pool.size());
  for (const auto& term : terms) {
    double df = 0;
    for (const auto& counts : tf) df += counts.count(term) ? 1 : 0;
    if (df == 0) continue;
    double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    for (std::size_t d = 0; d < pool.size(); ++d) {
      auto it = tf[d].find(term);
      if (it == tf[d].end()) continue;
      double f = it->second;
      scores[d] += idf * f * (params.k1 + 1.0) / (f + params.k1 * (1.0 - params.b + params.b * length[d] / avgdl));
    }
  }
  return scores;
}

ContextSelection select_context(std::string_view claim_text, const std::vector<Chunk>& pool, std::size_t n) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "top-n must be >= 1");
  ContextSelection sel;
  sel.budget_n = n;
  auto scores = bm25_scores(claim_text, pool);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(n, order.size()));
  std::sort(order.begin(), order.end());
  for (auto i : order) sel.selected.push_back(pool[i]);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    sel.scores.push_back({pool[i].source_key, pool[i].chunk_index, scores[i]});
  }
  return sel;
}

std::vector<Chunk> candidate_pool(const std::set<CitationKey>& citations,
                                  const std::map<CitationKey, std::vector<Chunk>>& chunks_by_source) {
  std::vector<Chunk> pool;
  for (auto key : citations) {
    if (auto it = chunks_by_source.find(key); it != chunks_by_source.end()) {
      pool.insert(pool.end(), it->second.begin(), it->second.end());
    }
  }
  return pool;
}

nlohmann::json to_json(const ContextSelection& sel) {
  nlohmann::json selected = nlohmann::json::array();
  for (const auto& c : sel.selected) selected.push_back({{"source_key", c.source_key}, {"chunk_index", c.chunk_index}});
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& s : sel.scores) {
    scores.push_back({{"source_key", s.source_key}, {"chunk_index", s.chunk_index}, {"score", s.score}});
  }
  return {{"claim_id", sel.claim_id.str()},
          {"budget_n", sel.budget_n == kAllChunks ? nlohmann::json(nullptr) : nlohmann::json(sel.budget_n)},
          {"selected", selected},
          {"scores", scores}};
}

}  // namespace reportcheck
