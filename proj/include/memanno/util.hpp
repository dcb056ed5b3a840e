#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memanno {

/// 64-bit FNV-1a. Used for content hashes and cache keys; must stay stable
/// across platforms and releases because cache files and mock fixtures are
/// keyed by it.
std::uint64_t fnv1a64(std::string_view data);

/// fnv1a64 rendered as a 16-char lowercase hex string.
std::string fnv1a64_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
std::optional<std::string> try_read_file(const std::filesystem::path& path);

/// Writes via a temp file in the same directory followed by a rename, so
/// concurrent writers never expose a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Shell-style glob match supporting `*`, `?` and `[...]` classes. Patterns
/// without a `/` are matched against the basename, patterns with one against
/// the whole (relative) path.
bool glob_match(std::string_view pattern, std::string_view path);

/// In-place replacement of every occurrence of `from` with `to`.
void replace_all(std::string& s, std::string_view from, std::string_view to);

/// Current time as "YYYY-MM-DDTHH:MM:SSZ".
std::string iso_utc_now();

std::string to_lower(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Joins [begin, end) with `sep`.
std::string join(const std::vector<std::string>& parts, std::string_view sep);

} // namespace memanno
