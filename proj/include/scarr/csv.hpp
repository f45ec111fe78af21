#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace scarr {

struct CsvRow {
    int line = 0;
    std::vector<std::string> fields;
};

struct CsvTable {
    std::string origin;
    std::vector<std::string> header;
    std::vector<CsvRow> rows;

    /// "file:line: message"
    [[noreturn]] void fail(const CsvRow& row, const std::string& message) const;
    double number(const CsvRow& row, std::size_t col) const;
    int integer(const CsvRow& row, std::size_t col) const;
};

/// Reads a comma-separated file, skipping blank and '#' lines. When
/// `expected_header` is non-empty the header must match it exactly.
CsvTable read_csv(const std::filesystem::path& path,
                  const std::vector<std::string>& expected_header = {});

/// Writes text atomically enough for our purposes (truncate + write).
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

} // namespace scarr
