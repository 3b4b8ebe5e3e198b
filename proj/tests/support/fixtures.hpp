#pragma once

#include <string>

#include "reportcheck/text.hpp"

namespace testsupport {

inline std::string fixture(const std::string& name) {
  return reportcheck::read_file(std::string(REPORTCHECK_FIXTURE_DIR) + "/" + name);
}

// Model answer annotating four claims of annotated_report.md.
inline const char* kAnnotatedAnswer = R"({"claims": [
  {"position": "L1.S3", "index": 1,
   "claim_text": "Multi-junction solar cells have achieved efficiencies above 45% in laboratories.",
   "claim_class": "A", "direct_citation": [1], "evidence_position": null},
  {"position": "L2.S1", "index": 1,
   "claim_text": "The efficiency increase of multi-junction solar cells is due to layering different semiconductor materials.",
   "claim_class": "B", "direct_citation": [], "evidence_position": "L1.S3"},
  {"position": "L2.S3", "index": 1,
   "claim_text": "The enhanced efficiency of multi-junction cells will reduce the land area required for solar farms.",
   "claim_class": "C", "direct_citation": [], "evidence_position": "L1.S2"},
  {"position": "L2.S4", "index": 1,
   "claim_text": "New multi-junction panels are durable enough to withstand a Category 4 hurricane.",
   "claim_class": "F", "direct_citation": [], "evidence_position": null}
]})";

}  // namespace testsupport
