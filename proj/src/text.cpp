#include "reportcheck/text.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "reportcheck/error.hpp"

namespace reportcheck {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kConfig: return "config_error";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kTransport: return "transport";
    case ErrorCode::kRateLimited: return "rate_limited";
    case ErrorCode::kReplayMiss: return "replay_miss";
    case ErrorCode::kMalformedOutput: return "malformed_output";
    case ErrorCode::kDuplicateClaimId: return "duplicate_claim_id";
    case ErrorCode::kEmptyGold: return "empty_gold";
    case ErrorCode::kNotFetched: return "not_fetched";
    case ErrorCode::kSchemaViolation: return "schema_violation";
    case ErrorCode::kCountMismatch: return "count_mismatch";
    case ErrorCode::kIncompleteScores: return "incomplete_scores";
    case ErrorCode::kUnknownFactorId: return "unknown_factor_id";
    case ErrorCode::kDegenerateInput: return "degenerate_input";
    case ErrorCode::kNoPairs: return "no_pairs";
    case ErrorCode::kInsufficientOverlap: return "insufficient_overlap";
    case ErrorCode::kMissingCells: return "missing_cells";
    case ErrorCode::kMissingUpstream: return "missing_upstream";
    case ErrorCode::kStageFailure: return "stage_failure";
    case ErrorCode::kIo: return "io_error";
  }
  return "unknown";
}

namespace {

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c >= 0x80;
}

}  // namespace

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char ch : text) {
    bool space = std::isspace(static_cast<unsigned char>(ch)) != 0;
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

std::string_view trim(std::string_view text) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && to_lower(a) == to_lower(b);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

void append_line(const std::string& path, std::string_view line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::kIo, "cannot append to " + path);
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.put('\n');
}

namespace {

std::string format_utc(std::chrono::system_clock::time_point t, const char* fmt) {
  std::time_t secs = std::chrono::system_clock::to_time_t(t);
  std::tm parts{};
  gmtime_r(&secs, &parts);
  char buf[40];
  std::strftime(buf, sizeof buf, fmt, &parts);
  return buf;
}

}  // namespace

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  return format_utc(t, "%Y-%m-%dT%H:%M:%SZ");
}

std::string utc_date(std::chrono::system_clock::time_point t) { return format_utc(t, "%Y-%m-%d"); }

std::chrono::system_clock::time_point parse_utc_timestamp(std::string_view text) {
  std::tm tm{};
  std::istringstream in{std::string(text)};
  in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  if (in.fail() || in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::kInvalidArgument, "not a UTC timestamp: " + std::string(text));
  }
  return std::chrono::system_clock::from_time_t(timegm(&tm));
}

void parallel_for(std::size_t n, std::size_t max_in_flight,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  std::size_t workers = std::clamp<std::size_t>(max_in_flight, 1, n);
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace reportcheck
