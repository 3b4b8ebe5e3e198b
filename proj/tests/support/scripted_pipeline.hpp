#pragma once

// Deterministic stand-ins for every model and the web, used to record the
// end-to-end replay fixtures and by pipeline tests that run in record mode.

#include <atomic>
#include <map>
#include <string>
#include <vector>

#include "reportcheck/claims.hpp"
#include "reportcheck/evidence.hpp"
#include "reportcheck/gateway.hpp"
#include "reportcheck/report_model.hpp"
#include "reportcheck/rubric.hpp"
#include "reportcheck/text.hpp"
#include "reportcheck/verify.hpp"
#include "support/scripted_models.hpp"

namespace testsupport {

inline bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

inline std::string strip_markers(const std::string& text) {
  std::string out;
  int depth = 0;
  for (char ch : text) {
    if (ch == '[') ++depth;
    if (depth == 0) out += ch;
    if (ch == ']' && depth > 0) --depth;
  }
  std::string trimmed(reportcheck::trim(out));
  std::string squeezed;
  for (char ch : trimmed) {
    if (ch == ' ' && !squeezed.empty() && squeezed.back() == ' ') continue;
    if ((ch == '.' || ch == ',') && !squeezed.empty() && squeezed.back() == ' ') squeezed.pop_back();
    squeezed += ch;
  }
  return squeezed;
}

// One claim per target sentence, classed from surface cues.
inline std::string answer_extraction(const reportcheck::ModelRequest& request) {
  const std::string& user = request.user_text;
  auto start = user.find("# Target Sentences to Extract Claims From\n");
  nlohmann::json claims = nlohmann::json::array();
  if (start == std::string::npos) return nlohmann::json{{"claims", claims}}.dump();
  std::size_t pos = user.find('\n', start) + 1;
  while (pos < user.size()) {
    auto nl = user.find('\n', pos);
    if (nl == std::string::npos) nl = user.size();
    std::string line = user.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) break;
    auto colon = line.find(": ");
    if (colon == std::string::npos) continue;
    auto position = reportcheck::PositionId::parse(line.substr(0, colon));
    if (!position) continue;
    std::string text = line.substr(colon + 2);
    if (reportcheck::word_tokens(text).size() < 5) continue;  // headings
    auto cites = reportcheck::parse_citations(text);
    nlohmann::json c = {{"position", position->str()}, {"index", 1}, {"claim_text", strip_markers(text)},
                        {"direct_citation", nlohmann::json::array()}, {"evidence_position", nullptr}};
    if (!cites.empty()) {
      c["claim_class"] = "A";
      c["direct_citation"] = cites;
    } else if ((starts_with(text, "This ") || starts_with(text, "These ") || starts_with(text, "As a result")) &&
               position->sentence > 1) {
      c["claim_class"] = "B";
      c["evidence_position"] = reportcheck::PositionId{position->block, position->sentence - 1}.str();
    } else if (starts_with(text, "As noted above") && position->block > 1) {
      c["claim_class"] = "C";
      c["evidence_position"] = reportcheck::PositionId{position->block - 2, 1}.str();
    } else if (starts_with(text, "In summary")) {
      c["claim_class"] = "D";
    } else if (text.find_first_of("0123456789") != std::string::npos || text.find("report") != std::string::npos) {
      c["claim_class"] = "F";
    } else {
      c["claim_class"] = "E";
    }
    claims.push_back(c);
  }
  return nlohmann::json{{"claims", claims}}.dump();
}

inline std::string answer_fair_use(const reportcheck::ModelRequest& request) {
  bool marked = request.user_text.find("Marked as a quotation: yes") != std::string::npos;
  bool cited = request.user_text.find(": yes\n\nSource") != std::string::npos;
  bool ok = marked && cited;
  return nlohmann::json{{"compliant", ok},
                        {"rationale", ok ? "quoted with attribution" : "source wording reused without quotation marks"}}
      .dump();
}

// Scores derived from a hash of model and factor id; about one factor in
// twenty is NA.
inline std::string answer_judge(const reportcheck::ModelRequest& request) {
  nlohmann::json scores = nlohmann::json::array();
  std::size_t pos = 0;
  const std::string& user = request.user_text;
  while (pos < user.size()) {
    auto nl = user.find('\n', pos);
    if (nl == std::string::npos) nl = user.size();
    std::string line = user.substr(pos, nl - pos);
    pos = nl + 1;
    if (!starts_with(line, "- ")) continue;
    auto space = line.find(' ', 2);
    if (space == std::string::npos || line.find(" [", 2) != space) continue;
    std::string id = line.substr(2, space - 2);
    unsigned h = std::stoul(reportcheck::sha256_hex(request.model + "/" + id).substr(0, 6), nullptr, 16);
    if (h % 20 == 0) {
      scores.push_back({{"factor_id", id}, {"score", "NA"}, {"rationale", "Not applicable to this report."}});
    } else {
      scores.push_back({{"factor_id", id}, {"score", 3 + static_cast<int>(h % 8)}, {"rationale", "Scripted assessment."}});
    }
  }
  return nlohmann::json{{"scores", scores}}.dump();
}

inline reportcheck::BackendReply scripted_reply(const reportcheck::ModelRequest& request) {
  std::string schema = request.expected_schema.value_or("");
  std::string text;
  if (schema == reportcheck::kClaimSchemaId) {
    text = answer_extraction(request);
  } else if (schema == reportcheck::kVerificationSchemaId) {
    text = answer_verification(request);
  } else if (schema == "fair_use.v1") {
    text = answer_fair_use(request);
  } else if (schema == reportcheck::kJudgeSchemaId) {
    text = answer_judge(request);
  } else {
    throw reportcheck::Error(reportcheck::ErrorCode::kTransport, "unscripted schema " + schema);
  }
  auto in = static_cast<std::int64_t>(reportcheck::word_tokens(request.system_text + request.user_text).size());
  auto out = static_cast<std::int64_t>(reportcheck::word_tokens(text).size());
  return {text, in, out};
}

class ScriptedBackend : public reportcheck::ModelBackend {
 public:
  reportcheck::BackendReply send(const reportcheck::ModelRequest& request) override {
    ++sends;
    return scripted_reply(request);
  }
  std::atomic<int> sends{0};
};

// Serves fixed pages; unknown URLs are 404.
class MapPageGetter : public reportcheck::PageGetter {
 public:
  explicit MapPageGetter(std::map<std::string, std::string> pages) : pages_(std::move(pages)) {}
  reportcheck::Page get(const std::string& url) override {
    ++gets;
    auto it = pages_.find(url);
    if (it == pages_.end()) return {404, "not found", "text/html"};
    return {200, it->second, "text/html; charset=utf-8"};
  }
  std::atomic<int> gets{0};

 private:
  std::map<std::string, std::string> pages_;
};

inline std::string e2e_dir() { return std::string(REPORTCHECK_FIXTURE_DIR) + "/e2e"; }

inline std::map<std::string, std::string> e2e_pages() {
  std::string dir = e2e_dir() + "/pages/";
  return {{"https://heat.example.org/basics", reportcheck::read_file(dir + "basics.html")},
          {"https://roofs.example.org/trials", reportcheck::read_file(dir + "trials.html")},
          {"https://green.example.org/cooling", reportcheck::read_file(dir + "cooling.html")}};
}

}  // namespace testsupport
