#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dirinet {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_integer(std::string_view text);

std::string_view trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char delimiter);

/// `key = value` lines; '#' starts a comment, blank lines are skipped.
/// Throws InputError on a malformed line or repeated key.
std::map<std::string, std::string> parse_key_values(std::string_view text,
                                                     const std::string& source_name);

std::string read_file(const std::string& path);

/// Writes via a temporary file in the same directory and renames it.
void write_file_atomic(const std::string& path, const std::string& contents);

/// FNV-1a 64-bit digest, printed as 16 hex digits.
std::string digest_hex(std::string_view bytes);

}  // namespace dirinet
