#pragma once

// Small helpers for the line-oriented `key=value` text used in file metadata,
// manifests and sidecars.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rcmact/error.hpp"

namespace rcmact {

using KeyValues = std::map<std::string, std::string>;
using KeyValueList = std::vector<std::pair<std::string, std::string>>;

/// Shortest representation that parses back to the same double.
std::string format_real(double v);
std::string format_reals(std::span<const double> v);
double parse_real(std::string_view s);
std::vector<double> parse_reals(std::string_view s);
long long parse_int(std::string_view s);

const std::string& require_key(const KeyValues& kv, const std::string& key);

std::string format_key_values(const KeyValues& kv);
std::string format_key_value_list(const KeyValueList& kv);
/// Blank lines and lines starting with '#' are skipped; other lines without
/// '=' raise `on_error`.
KeyValues parse_key_values(std::string_view text, ErrorCode on_error);
KeyValueList parse_key_value_list(std::string_view text, ErrorCode on_error);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace rcmact
