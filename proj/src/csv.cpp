#include "scarr/csv.hpp"

#include <fstream>
#include <sstream>

#include "scarr/error.hpp"
#include "scarr/text.hpp"

namespace scarr {

void CsvTable::fail(const CsvRow& row, const std::string& message) const
{
    throw DataError(origin + ":" + std::to_string(row.line) + ": " + message);
}

double CsvTable::number(const CsvRow& row, std::size_t col) const
{
    auto v = parse_double(row.fields.at(col));
    if (!v)
        fail(row, "column '" + header.at(col) + "' is not a number: '" + row.fields[col] + "'");
    return *v;
}

int CsvTable::integer(const CsvRow& row, std::size_t col) const
{
    auto v = parse_int(row.fields.at(col));
    if (!v)
        fail(row, "column '" + header.at(col) + "' is not an integer: '" + row.fields[col] + "'");
    return static_cast<int>(*v);
}

CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open " + path.string());
    CsvTable table;
    table.origin = path.filename().string();
    std::string line;
    int lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        auto fields = split(t, ',');
        if (!have_header) {
            table.header = fields;
            have_header = true;
            if (!expected_header.empty() && table.header != expected_header) {
                std::string want;
                for (const auto& h : expected_header)
                    want += (want.empty() ? "" : ",") + h;
                throw DataError(table.origin + ":" + std::to_string(lineno) +
                                ": header mismatch, expected '" + want + "'");
            }
            continue;
        }
        if (fields.size() != table.header.size())
            throw DataError(table.origin + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(table.header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        table.rows.push_back({lineno, std::move(fields)});
    }
    if (!have_header)
        throw DataError(table.origin + ": empty file (no header)");
    return table;
}

void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << text;
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace scarr
