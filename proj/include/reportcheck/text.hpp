#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace reportcheck {

// Lowercased runs of ASCII letters/digits. Bytes >= 0x80 count as word
// characters so UTF-8 text in other scripts still yields tokens.
std::vector<std::string> word_tokens(std::string_view text);

// Number of whitespace-delimited tokens.
std::size_t whitespace_token_count(std::string_view text);

std::string_view trim(std::string_view text);
std::string to_lower(std::string_view text);
bool iequals(std::string_view a, std::string_view b);

std::string sha256_hex(std::string_view data);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);
void append_line(const std::string& path, std::string_view line);

// "2024-05-01T12:00:00Z" and "2024-05-01".
std::string utc_timestamp(std::chrono::system_clock::time_point t);
std::string utc_date(std::chrono::system_clock::time_point t);
// Inverse of utc_timestamp. Error(kInvalidArgument) on anything else.
std::chrono::system_clock::time_point parse_utc_timestamp(std::string_view text);

// Runs fn(i) for i in [0, n) on at most max_in_flight threads. The exception
// from the lowest failing index is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t max_in_flight,
                  const std::function<void(std::size_t)>& fn);

}  // namespace reportcheck
