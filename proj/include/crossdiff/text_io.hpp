#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace crossdiff {

std::string read_file(const std::filesystem::path& path);
/// Writes atomically (temp file + rename).
void write_file(const std::filesystem::path& path, std::string_view contents);

std::vector<std::string_view> split(std::string_view s, char sep);

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(line);
    pos = end + 1;
  }
}

/// Shortest round-trip decimal form; locale independent.
std::string format_double(double v);
/// Fixed-point with the given number of decimals; locale independent.
std::string format_fixed(double v, int decimals);
bool parse_double(std::string_view s, double& out);
bool parse_u64(std::string_view s, uint64_t& out);

}  // namespace crossdiff
