#pragma once

// `key = value` text used by run configs and checkpoint headers.
// Blank lines and lines starting with '#' are ignored.

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gpas::kv {

using Pairs = std::vector<std::pair<std::string, std::string>>;

Pairs parse(std::istream &in);
Pairs parse_file(const std::string &path);
std::string format(const Pairs &pairs);

/// Round-trip exact text for a double.
std::string to_text(double v);
std::string to_text(bool v);
std::string to_text(std::size_t v);

double to_double(std::string_view key, std::string_view text);
std::size_t to_size(std::string_view key, std::string_view text);
std::uint64_t to_u64(std::string_view key, std::string_view text);
bool to_bool(std::string_view key, std::string_view text);

} // namespace gpas::kv
