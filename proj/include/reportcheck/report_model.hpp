#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace reportcheck {

using CitationKey = int;

// Sentence address inside a report, rendered as "L{block}.S{sentence}".
struct PositionId {
  int block = 0;
  int sentence = 0;

  auto operator<=>(const PositionId&) const = default;

  std::string str() const;
  static std::optional<PositionId> parse(std::string_view text);
};

enum class BlockKind { kParagraph, kHeading, kListItem, kTableRow, kBlockquote };

std::string_view block_kind_name(BlockKind kind);
std::optional<BlockKind> parse_block_kind(std::string_view name);

struct SentenceUnit {
  PositionId position;
  std::string text;
  std::vector<CitationKey> citations;
  BlockKind block_kind = BlockKind::kParagraph;
};

struct ReferenceEntry {
  CitationKey key = 0;
  std::string url;
  std::optional<std::string> title;
  std::string raw_line;
  bool unresolvable = false;
};

// A segmented report. Built once by segment_report() and treated as
// immutable afterwards; sentences are kept in document (position) order.
struct ReportDocument {
  std::vector<SentenceUnit> sentences;
  std::map<CitationKey, ReferenceEntry> references;
  std::set<CitationKey> dangling_citations;
  std::vector<std::string> malformed_reference_lines;
  std::string source_text;

  const SentenceUnit* find(PositionId position) const;
  // Zero-based index of the sentence in global document order.
  std::optional<std::size_t> ordinal(PositionId position) const;
  std::size_t paragraph_block_count() const;
  // Report body rendered with position labels, one sentence per line.
  std::string labelled_text() const;
};

ReportDocument segment_report(std::string_view markdown);

// Keys of bracketed numeric markers ([n], [n,m], [n-m], [n–m]) in order of
// appearance, deduplicated. Markers inside inline code spans are ignored.
std::vector<CitationKey> parse_citations(std::string_view sentence_text);

// Splits one block of prose into trimmed sentences.
std::vector<std::string> split_sentences(std::string_view block_text);

nlohmann::json to_json(const ReportDocument& doc);
ReportDocument document_from_json(const nlohmann::json& j);

}  // namespace reportcheck
