#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cxnlm::io {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Hex SHA-256 of a byte string / a file's content.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);
// Splits one CSV record, honouring double-quoted fields.
std::vector<std::string> parse_csv_line(std::string_view line);

// Shortest decimal representation that round-trips (for CSV/JSON output).
std::string format_double(double v);

}  // namespace cxnlm::io
