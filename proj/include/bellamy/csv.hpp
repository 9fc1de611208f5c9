#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bellamy::csv {

using Row = std::vector<std::string>;

// RFC 4180 style: comma separated, double-quote escaping, CRLF or LF.
std::vector<Row> parse(std::string_view text);
std::vector<Row> read_file(const std::filesystem::path& path);

std::string escape(std::string_view field);
std::string format_row(const Row& row);

// Writes next to `path` first, then renames into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace bellamy::csv
