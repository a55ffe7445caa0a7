#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cpd {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
// Strict parse of the whole string; raises ErrorKind::MalformedConfig with `what` in the message.
double parse_double(std::string_view s, std::string_view what = "value");
long long parse_int(std::string_view s, std::string_view what = "value");

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
// Whitespace-separated words.
std::vector<std::string> words(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// key=value lines; blank lines and lines starting with '#' are skipped. Duplicate or
// malformed keys raise ErrorKind::MalformedConfig.
std::map<std::string, std::string> parse_key_values(std::string_view text, std::string_view source = "config");

}  // namespace cpd
