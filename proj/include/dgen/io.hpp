#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace dgen {

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Calls `on_record(json, line_number)` for each non-blank line. Parse
// failures throw DataError with the line number.
void for_each_json_line(std::istream& in, const std::string& source,
                        const std::function<void(const nlohmann::json&, std::size_t)>& on_record);
void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const nlohmann::json&, std::size_t)>& on_record);
std::string to_json_lines(std::span<const nlohmann::json> records);

// Stable JSON text: sorted keys, 2-space indent, trailing newline.
std::string pretty_json(const nlohmann::json& value);

// RFC 4180 CSV.
using CsvRow = std::vector<std::string>;
std::string csv_escape(std::string_view field);
std::string to_csv(std::span<const CsvRow> rows);
std::vector<CsvRow> parse_csv(std::string_view text);

}  // namespace dgen
