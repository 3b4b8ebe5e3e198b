#include "reportcheck/report_model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>

#include "reportcheck/error.hpp"
#include "reportcheck/text.hpp"

namespace reportcheck {

std::string PositionId::str() const {
  return "L" + std::to_string(block) + ".S" + std::to_string(sentence);
}

namespace {

std::optional<int> parse_positive(std::string_view digits) {
  if (digits.empty() || digits.size() > 9) return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || value <= 0) {
    return std::nullopt;
  }
  return value;
}

}  // namespace

std::optional<PositionId> PositionId::parse(std::string_view text) {
  text = trim(text);
  if (text.size() < 5 || text[0] != 'L') return std::nullopt;
  auto dot = text.find(".S");
  if (dot == std::string_view::npos) return std::nullopt;
  auto block = parse_positive(text.substr(1, dot - 1));
  auto sentence = parse_positive(text.substr(dot + 2));
  if (!block || !sentence) return std::nullopt;
  return PositionId{*block, *sentence};
}

std::string_view block_kind_name(BlockKind kind) {
  switch (kind) {
    case BlockKind::kParagraph: return "paragraph";
    case BlockKind::kHeading: return "heading";
    case BlockKind::kListItem: return "list_item";
    case BlockKind::kTableRow: return "table_row";
    case BlockKind::kBlockquote: return "blockquote";
  }
  return "paragraph";
}

std::optional<BlockKind> parse_block_kind(std::string_view name) {
  for (auto kind : {BlockKind::kParagraph, BlockKind::kHeading, BlockKind::kListItem,
                    BlockKind::kTableRow, BlockKind::kBlockquote}) {
    if (block_kind_name(kind) == name) return kind;
  }
  return std::nullopt;
}

const SentenceUnit* ReportDocument::find(PositionId position) const {
  auto it = std::lower_bound(
      sentences.begin(), sentences.end(), position,
      [](const SentenceUnit& unit, PositionId p) { return unit.position < p; });
  if (it == sentences.end() || it->position != position) return nullptr;
  return &*it;
}

std::optional<std::size_t> ReportDocument::ordinal(PositionId position) const {
  const SentenceUnit* unit = find(position);
  if (unit == nullptr) return std::nullopt;
  return static_cast<std::size_t>(unit - sentences.data());
}

std::size_t ReportDocument::paragraph_block_count() const {
  std::set<int> blocks;
  for (const auto& s : sentences) {
    if (s.block_kind == BlockKind::kParagraph) blocks.insert(s.position.block);
  }
  return blocks.size();
}

std::string ReportDocument::labelled_text() const {
  std::string out;
  for (const auto& s : sentences) {
    out += s.position.str();
    out += ": ";
    out += s.text;
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Citation markers

namespace {

std::string blank_code_spans(std::string_view text) {
  std::string out(text);
  std::size_t i = 0;
  while (i < out.size()) {
    if (out[i] != '`') {
      ++i;
      continue;
    }
    std::size_t run = 0;
    while (i + run < out.size() && out[i + run] == '`') ++run;
    std::string fence(run, '`');
    auto close = out.find(fence, i + run);
    if (close == std::string::npos) {
      i += run;
      continue;
    }
    for (std::size_t k = i + run; k < close; ++k) out[k] = ' ';
    i = close + run;
  }
  return out;
}

constexpr std::string_view kEnDash = "\xE2\x80\x93";
constexpr int kMaxRangeSpan = 1000;

// Parses the inside of one bracket pair; false when it is not a marker.
bool parse_marker_body(std::string_view body, std::vector<CitationKey>& keys) {
  std::vector<CitationKey> found;
  std::size_t start = 0;
  while (start <= body.size()) {
    auto comma = body.find(',', start);
    auto part = trim(body.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                         : comma - start));
    if (part.empty()) return false;
    std::size_t sep = part.find(kEnDash);
    std::size_t sep_len = kEnDash.size();
    if (sep == std::string_view::npos) {
      sep = part.find('-');
      sep_len = 1;
    }
    if (sep == std::string_view::npos) {
      auto n = parse_positive(part);
      if (!n) return false;
      found.push_back(*n);
    } else {
      auto lo = parse_positive(trim(part.substr(0, sep)));
      auto hi = parse_positive(trim(part.substr(sep + sep_len)));
      if (!lo || !hi || *lo > *hi || *hi - *lo > kMaxRangeSpan) return false;
      for (int k = *lo; k <= *hi; ++k) found.push_back(k);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  keys.insert(keys.end(), found.begin(), found.end());
  return true;
}

}  // namespace

std::vector<CitationKey> parse_citations(std::string_view sentence_text) {
  std::string text = blank_code_spans(sentence_text);
  std::vector<CitationKey> keys;
  std::size_t i = 0;
  while ((i = text.find('[', i)) != std::string::npos) {
    auto close = text.find_first_of("[]", i + 1);
    if (close == std::string::npos) break;
    if (text[close] == '[') {
      i = close;
      continue;
    }
    parse_marker_body(std::string_view(text).substr(i + 1, close - i - 1), keys);
    i = close + 1;
  }
  std::vector<CitationKey> unique;
  std::set<CitationKey> seen;
  for (auto k : keys) {
    if (seen.insert(k).second) unique.push_back(k);
  }
  return unique;
}

// ---------------------------------------------------------------------------
// Sentence splitting

namespace {

constexpr std::array<std::string_view, 30> kAbbreviations = {
    "e.g.", "i.e.", "al.",   "fig.",  "figs.", "eq.",  "eqs.", "vs.",   "cf.",   "dr.",
    "mr.",  "mrs.", "ms.",   "prof.", "no.",   "nos.", "vol.", "pp.",   "p.",    "ref.",
    "refs.", "sec.", "approx.", "ca.", "st.",  "jr.",  "sr.",  "inc.",  "ltd.",  "u.s."};

bool starts_with_at(std::string_view s, std::size_t pos, std::string_view prefix) {
  return s.substr(pos, prefix.size()) == prefix;
}

// Length of a closing quote/bracket sequence starting at pos.
std::size_t closer_length(std::string_view s, std::size_t pos) {
  if (pos >= s.size()) return 0;
  char c = s[pos];
  if (c == '"' || c == '\'' || c == ')' || c == '*' || c == '_') return 1;
  if (starts_with_at(s, pos, "\xE2\x80\x9D") || starts_with_at(s, pos, "\xE2\x80\x99")) return 3;
  return 0;
}

bool opens_sentence(std::string_view s, std::size_t pos) {
  if (pos >= s.size()) return false;
  auto c = static_cast<unsigned char>(s[pos]);
  if (std::isupper(c) || std::isdigit(c)) return true;
  if (c == '"' || c == '(' || c == '*') return opens_sentence(s, pos + 1);
  if (starts_with_at(s, pos, "\xE2\x80\x9C")) return opens_sentence(s, pos + 3);
  return false;
}

bool is_abbreviation(std::string_view s, std::size_t period) {
  std::size_t begin = period;
  while (begin > 0 && std::isspace(static_cast<unsigned char>(s[begin - 1])) == 0) --begin;
  std::string word = to_lower(s.substr(begin, period - begin + 1));
  while (!word.empty() && (word.front() == '(' || word.front() == '"' || word.front() == '[')) {
    word.erase(word.begin());
  }
  if (word.size() == 2 && std::isalpha(static_cast<unsigned char>(word[0]))) {
    // Single-letter initial such as "J." in "J. Smith".
    return std::isupper(static_cast<unsigned char>(s[period - 1])) != 0;
  }
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  auto emit = [&](std::string_view piece) {
    piece = trim(piece);
    if (!piece.empty()) out.emplace_back(piece);
  };
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c != '.' && c != '?' && c != '!') {
      ++i;
      continue;
    }
    std::size_t end = i + 1;
    while (end < text.size() && (text[end] == '.' || text[end] == '?' || text[end] == '!')) ++end;
    while (std::size_t n = closer_length(text, end)) end += n;
    if (end >= text.size() || std::isspace(static_cast<unsigned char>(text[end])) == 0) {
      i = end;
      continue;
    }
    std::size_t next = end;
    while (next < text.size() && std::isspace(static_cast<unsigned char>(text[next])) != 0) ++next;
    bool boundary = opens_sentence(text, next);
    if (boundary && c == '.' && end == i + 1 && is_abbreviation(text, i)) {
      boundary = false;
    }
    if (boundary) {
      emit(text.substr(start, end - start));
      start = next;
    }
    i = next;
  }
  emit(text.substr(start));
  return out;
}

// ---------------------------------------------------------------------------
// Segmentation

namespace {

struct LineClass {
  int heading_level = 0;  // 0 when not an ATX heading
  std::string_view heading_text;
};

LineClass classify_heading(std::string_view line) {
  std::size_t indent = 0;
  while (indent < line.size() && indent < 4 && line[indent] == ' ') ++indent;
  if (indent > 3) return {};
  std::size_t hashes = 0;
  while (indent + hashes < line.size() && line[indent + hashes] == '#') ++hashes;
  if (hashes == 0 || hashes > 6) return {};
  std::size_t after = indent + hashes;
  if (after < line.size() && line[after] != ' ' && line[after] != '\t') return {};
  std::string_view rest = trim(line.substr(after));
  while (!rest.empty() && rest.back() == '#') rest.remove_suffix(1);
  return {static_cast<int>(hashes), trim(rest)};
}

bool is_list_item(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  if (i >= line.size()) return false;
  if (line[i] == '-' || line[i] == '*' || line[i] == '+') {
    return i + 1 < line.size() && (line[i + 1] == ' ' || line[i + 1] == '\t');
  }
  std::size_t digits = 0;
  while (i + digits < line.size() && std::isdigit(static_cast<unsigned char>(line[i + digits]))) ++digits;
  if (digits == 0 || digits > 9) return false;
  std::size_t j = i + digits;
  return j + 1 < line.size() && (line[j] == '.' || line[j] == ')') &&
         (line[j + 1] == ' ' || line[j + 1] == '\t');
}

bool is_fence(std::string_view trimmed) {
  return trimmed.starts_with("```") || trimmed.starts_with("~~~");
}

bool is_thematic_break(std::string_view trimmed) {
  if (trimmed.size() < 3) return false;
  char mark = trimmed[0];
  if (mark != '-' && mark != '*' && mark != '_') return false;
  std::size_t count = 0;
  for (char c : trimmed) {
    if (c == mark) {
      ++count;
    } else if (c != ' ' && c != '\t') {
      return false;
    }
  }
  return count >= 3;
}

bool is_table_delimiter(std::string_view trimmed) {
  if (trimmed.empty() || trimmed.find('-') == std::string_view::npos) return false;
  return std::all_of(trimmed.begin(), trimmed.end(), [](char c) {
    return c == '|' || c == '-' || c == ':' || c == ' ' || c == '\t';
  });
}

bool is_reference_title(std::string_view heading_text) {
  return iequals(heading_text, "references") || iequals(heading_text, "bibliography");
}

std::string strip_url_tail(std::string_view url) {
  while (!url.empty() && std::string_view(".,;:)]>\"'").find(url.back()) != std::string_view::npos) {
    url.remove_suffix(1);
  }
  return std::string(url);
}

bool is_valid_url(std::string_view url) {
  std::size_t scheme = 0;
  if (url.starts_with("https://")) {
    scheme = 8;
  } else if (url.starts_with("http://")) {
    scheme = 7;
  } else {
    return false;
  }
  auto host = url.substr(scheme, url.find('/', scheme) - scheme);
  return !host.empty() && host.find_first_of(" \t<>\"") == std::string_view::npos;
}

// Returns nullopt when the line does not carry a "[n]" key.
std::optional<ReferenceEntry> parse_reference_line(std::string_view raw) {
  std::string_view line = trim(raw);
  if (line.starts_with("- ") || line.starts_with("* ") || line.starts_with("+ ")) {
    line = trim(line.substr(2));
  }
  if (line.empty() || line[0] != '[') return std::nullopt;
  auto close = line.find(']');
  if (close == std::string_view::npos) return std::nullopt;
  auto key = parse_positive(trim(line.substr(1, close - 1)));
  if (!key) return std::nullopt;

  ReferenceEntry entry;
  entry.key = *key;
  entry.raw_line = std::string(trim(raw));
  std::string rest(trim(line.substr(close + 1)));
  if (!rest.empty() && (rest[0] == ':' || rest[0] == '.')) rest = std::string(trim(rest.substr(1)));

  std::string title = rest;
  auto scheme = rest.find("http");
  while (scheme != std::string::npos && !(std::string_view(rest).substr(scheme).starts_with("http://") ||
                                          std::string_view(rest).substr(scheme).starts_with("https://"))) {
    scheme = rest.find("http", scheme + 1);
  }
  if (scheme != std::string::npos) {
    auto stop = rest.find_first_of(" \t<>\"", scheme);
    std::size_t len = stop == std::string::npos ? std::string::npos : stop - scheme;
    entry.url = strip_url_tail(std::string_view(rest).substr(scheme, len));
    // Drop the URL (and a surrounding markdown link) from the title.
    std::size_t cut_begin = scheme;
    std::size_t cut_end = scheme + entry.url.size();
    if (cut_begin > 0 && rest[cut_begin - 1] == '(') {
      --cut_begin;
      if (cut_end < rest.size() && rest[cut_end] == ')') ++cut_end;
    }
    title = rest.substr(0, cut_begin) + rest.substr(std::min(cut_end, rest.size()));
    // "[Title](url)" leaves "[Title]"; unwrap it.
    std::string_view t = trim(title);
    if (t.size() >= 2 && t.front() == '[' && t.back() == ']') t = t.substr(1, t.size() - 2);
    title = std::string(t);
  }
  std::string_view t = trim(title);
  while (!t.empty() && std::string_view("-:,.<>").find(t.back()) != std::string_view::npos) {
    t.remove_suffix(1);
    t = trim(t);
  }
  while (!t.empty() && std::string_view("-:,.<>").find(t.front()) != std::string_view::npos) {
    t.remove_prefix(1);
    t = trim(t);
  }
  if (!t.empty()) entry.title = std::string(t);
  entry.unresolvable = !is_valid_url(entry.url);
  return entry;
}

class Segmenter {
 public:
  ReportDocument run(std::string_view markdown) {
    doc_.source_text = std::string(markdown);
    std::size_t pos = 0;
    while (pos <= markdown.size()) {
      auto nl = markdown.find('\n', pos);
      std::string_view line = markdown.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                                                : nl - pos);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      consume(line);
      if (nl == std::string_view::npos) break;
      pos = nl + 1;
    }
    flush();
    if (in_fence_) emit_block(BlockKind::kParagraph, fence_text_, false);
    for (const auto& s : doc_.sentences) {
      for (auto key : s.citations) {
        if (!doc_.references.count(key)) doc_.dangling_citations.insert(key);
      }
    }
    return std::move(doc_);
  }

 private:
  void consume(std::string_view line) {
    std::string_view trimmed = trim(line);
    if (in_fence_) {
      fence_text_ += '\n';
      fence_text_ += line;
      if (is_fence(trimmed)) {
        in_fence_ = false;
        emit_block(BlockKind::kParagraph, fence_text_, false);
        fence_text_.clear();
      }
      return;
    }
    LineClass heading = classify_heading(line);
    if (reference_level_ > 0) {
      if (heading.heading_level > 0 && heading.heading_level <= reference_level_) {
        reference_level_ = 0;  // section ended; fall through to body handling
      } else {
        if (!trimmed.empty()) add_reference(line);
        return;
      }
    }
    if (trimmed.empty()) {
      flush();
      return;
    }
    if (heading.heading_level > 0) {
      flush();
      if (is_reference_title(heading.heading_text)) {
        reference_level_ = heading.heading_level;
        return;
      }
      emit_block(BlockKind::kHeading, trimmed, false);
      return;
    }
    if (is_fence(trimmed)) {
      flush();
      in_fence_ = true;
      fence_text_ = std::string(line);
      return;
    }
    if (is_thematic_break(trimmed)) {
      flush();
      return;
    }
    if (trimmed.front() == '|') {
      flush();
      if (!is_table_delimiter(trimmed)) emit_block(BlockKind::kTableRow, trimmed, false);
      return;
    }
    if (trimmed.front() == '>') {
      flush();
      emit_block(BlockKind::kBlockquote, trimmed, true);
      return;
    }
    if (is_list_item(line)) {
      flush();
      pending_kind_ = BlockKind::kListItem;
      pending_ = std::string(trimmed);
      return;
    }
    if (!pending_.empty()) pending_ += '\n';
    pending_ += trimmed;
  }

  void flush() {
    if (pending_.empty()) return;
    emit_block(pending_kind_, pending_, pending_kind_ == BlockKind::kParagraph);
    pending_.clear();
    pending_kind_ = BlockKind::kParagraph;
  }

  void emit_block(BlockKind kind, std::string_view text, bool split) {
    std::vector<std::string> pieces;
    if (split) {
      pieces = split_sentences(text);
    } else if (!trim(text).empty()) {
      pieces.emplace_back(trim(text));
    }
    if (pieces.empty()) return;
    ++block_;
    int index = 0;
    bool code = is_fence(trim(text));
    for (auto& piece : pieces) {
      SentenceUnit unit;
      unit.position = PositionId{block_, ++index};
      unit.citations = code ? std::vector<CitationKey>{} : parse_citations(piece);
      unit.text = std::move(piece);
      unit.block_kind = kind;
      doc_.sentences.push_back(std::move(unit));
    }
  }

  void add_reference(std::string_view line) {
    auto entry = parse_reference_line(line);
    if (!entry || doc_.references.count(entry->key)) {
      doc_.malformed_reference_lines.emplace_back(trim(line));
      return;
    }
    doc_.references.emplace(entry->key, std::move(*entry));
  }

  ReportDocument doc_;
  int block_ = 0;
  int reference_level_ = 0;
  bool in_fence_ = false;
  std::string fence_text_;
  std::string pending_;
  BlockKind pending_kind_ = BlockKind::kParagraph;
};

}  // namespace

ReportDocument segment_report(std::string_view markdown) { return Segmenter{}.run(markdown); }

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const ReportDocument& doc) {
  nlohmann::json sentences = nlohmann::json::array();
  for (const auto& s : doc.sentences) {
    sentences.push_back({{"position", s.position.str()},
                         {"text", s.text},
                         {"citations", s.citations},
                         {"block_kind", block_kind_name(s.block_kind)}});
  }
  nlohmann::json references = nlohmann::json::array();
  for (const auto& [key, ref] : doc.references) {
    references.push_back({{"key", key},
                          {"url", ref.url},
                          {"title", ref.title ? nlohmann::json(*ref.title) : nlohmann::json(nullptr)},
                          {"raw_line", ref.raw_line},
                          {"unresolvable", ref.unresolvable}});
  }
  return {{"source_sha256", sha256_hex(doc.source_text)},
          {"source_text", doc.source_text},
          {"sentences", std::move(sentences)},
          {"references", std::move(references)},
          {"dangling_citations", doc.dangling_citations},
          {"malformed_reference_lines", doc.malformed_reference_lines}};
}

ReportDocument document_from_json(const nlohmann::json& j) {
  try {
    ReportDocument doc;
    doc.source_text = j.at("source_text").get<std::string>();
    for (const auto& s : j.at("sentences")) {
      SentenceUnit unit;
      auto pos = PositionId::parse(s.at("position").get<std::string>());
      auto kind = parse_block_kind(s.at("block_kind").get<std::string>());
      if (!pos || !kind) throw Error(ErrorCode::kSchemaViolation, "bad sentence entry");
      unit.position = *pos;
      unit.block_kind = *kind;
      unit.text = s.at("text").get<std::string>();
      unit.citations = s.at("citations").get<std::vector<CitationKey>>();
      doc.sentences.push_back(std::move(unit));
    }
    for (const auto& r : j.at("references")) {
      ReferenceEntry entry;
      entry.key = r.at("key").get<CitationKey>();
      entry.url = r.at("url").get<std::string>();
      if (!r.at("title").is_null()) entry.title = r.at("title").get<std::string>();
      entry.raw_line = r.at("raw_line").get<std::string>();
      entry.unresolvable = r.at("unresolvable").get<bool>();
      doc.references.emplace(entry.key, std::move(entry));
    }
    doc.dangling_citations = j.at("dangling_citations").get<std::set<CitationKey>>();
    doc.malformed_reference_lines = j.at("malformed_reference_lines").get<std::vector<std::string>>();
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("document json: ") + e.what());
  }
}

}  // namespace reportcheck
