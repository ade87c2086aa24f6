#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace xdfm {

// Flat `key = value` text: one pair per line, '#' starts a comment, blank
// lines ignored. Later duplicates override earlier ones.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::istream& in);
KeyValues load_key_values(const std::string& path);

std::string trim(const std::string& s);
std::vector<std::string> split_string(const std::string& s, char sep);

double parse_double(const std::string& key, const std::string& value);
std::int64_t parse_int(const std::string& key, const std::string& value);
std::uint64_t parse_uint(const std::string& key, const std::string& value);
std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value);

}  // namespace xdfm
