#pragma once

// Random markdown report generator and an independent body-text oracle used
// by the segmentation property tests.

#include <random>
#include <string>
#include <vector>

#include "reportcheck/text.hpp"

namespace testsupport {

inline std::string random_sentence(std::mt19937& rng, int max_ref) {
  static const std::vector<std::string> kWords = {
      "solar", "cells", "efficiency", "layered", "materials", "market", "policy",
      "growth", "data",  "model",     "results", "analysis",  "energy", "cost",
      "panels", "grid",  "storage",   "demand",  "carbon",    "output"};
  std::uniform_int_distribution<int> len(3, 12);
  std::uniform_int_distribution<std::size_t> pick(0, kWords.size() - 1);
  std::uniform_int_distribution<int> roll(0, 9);
  std::uniform_int_distribution<int> ref(1, max_ref);
  std::string s;
  int n = len(rng);
  for (int i = 0; i < n; ++i) {
    std::string w = kWords[pick(rng)];
    if (i == 0) w[0] = static_cast<char>(std::toupper(w[0]));
    if (!s.empty()) s += ' ';
    s += w;
    int r = roll(rng);
    if (r == 0 && i + 1 < n) s += " e.g. " + kWords[pick(rng)];
    if (r == 1) s += " " + std::to_string(ref(rng)) + ".5%";
    if (r == 2 && i + 1 < n) s += " (see Fig. 2)";
  }
  int c = roll(rng);
  if (c < 4) {
    s += " [" + std::to_string(ref(rng)) + "]";
  } else if (c == 4) {
    int a = ref(rng);
    s += " [" + std::to_string(a) + "," + std::to_string(a + 1) + "]";
  } else if (c == 5) {
    int a = ref(rng);
    s += " [" + std::to_string(a) + "-" + std::to_string(a + 2) + "]";
  }
  s += roll(rng) == 0 ? "?" : ".";
  return s;
}

inline std::string random_report(std::mt19937& rng) {
  std::uniform_int_distribution<int> blocks(3, 14);
  std::uniform_int_distribution<int> kind(0, 9);
  std::uniform_int_distribution<int> sentences(1, 6);
  const int max_ref = 8;
  std::string md;
  int n = blocks(rng);
  for (int b = 0; b < n; ++b) {
    int k = kind(rng);
    if (k == 0) {
      md += "## Section " + std::to_string(b) + "\n\n";
    } else if (k == 1) {
      md += "- " + random_sentence(rng, max_ref) + "\n- " + random_sentence(rng, max_ref) + "\n\n";
    } else if (k == 2) {
      md += "| metric | value |\n|---|---:|\n| efficiency | 45 [1] |\n\n";
    } else if (k == 3) {
      md += "> " + random_sentence(rng, max_ref) + " " + random_sentence(rng, max_ref) + "\n\n";
    } else {
      int m = sentences(rng);
      for (int i = 0; i < m; ++i) {
        md += random_sentence(rng, max_ref);
        md += (i % 3 == 2) ? "\n" : " ";
      }
      md += "\n\n";
    }
  }
  md += "## References\n\n";
  for (int r = 1; r <= max_ref; ++r) {
    md += "[" + std::to_string(r) + "] Source " + std::to_string(r) + " https://example.org/" +
          std::to_string(r) + "\n";
  }
  return md;
}

// Body text without whitespace: reference section, blank lines, table
// delimiter rows and thematic breaks removed.
inline std::string body_text_without_whitespace(const std::string& md) {
  std::string out;
  int ref_level = 0;
  std::size_t pos = 0;
  while (pos <= md.size()) {
    auto nl = md.find('\n', pos);
    std::string line = md.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? md.size() + 1 : nl + 1;
    std::string t(reportcheck::trim(line));
    int level = 0;
    while (level < static_cast<int>(t.size()) && t[level] == '#') ++level;
    bool heading = level > 0 && level <= 6 && (static_cast<int>(t.size()) == level || t[level] == ' ');
    if (ref_level > 0) {
      if (heading && level <= ref_level) {
        ref_level = 0;
      } else {
        continue;
      }
    }
    if (heading) {
      std::string title(reportcheck::trim(t.substr(level)));
      if (reportcheck::iequals(title, "references") || reportcheck::iequals(title, "bibliography")) {
        ref_level = level;
        continue;
      }
    }
    if (t.empty()) continue;
    if (t.find_first_not_of("|-: \t") == std::string::npos && t.find('-') != std::string::npos) continue;
    if (t.find_first_not_of("- \t") == std::string::npos && t.size() >= 3) continue;
    for (char c : t) {
      if (!std::isspace(static_cast<unsigned char>(c))) out += c;
    }
  }
  return out;
}

}  // namespace testsupport
