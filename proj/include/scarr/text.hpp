#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scarr {

inline constexpr const char* kVersion = "0.1.0";

/// Shortest decimal text that reads back to the identical double.
std::string format_number(double value);

/// Six significant digits, `%.6g`; used for raster cells.
std::string format_g6(double value);

std::string join_numbers(const std::vector<double>& values, char sep = ',');
std::vector<double> parse_number_list(std::string_view text, char sep = ',');

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Strict parsers: the whole field must be consumed.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

/// FNV-1a 64-bit, printed as 16 hex digits.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

/// First line of every file the toolkit writes.
std::string header_comment(std::string_view config_hash);

} // namespace scarr
