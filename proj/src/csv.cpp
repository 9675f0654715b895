#include "fokkerid/csv.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "fokkerid/errors.hpp"

namespace fokkerid {

std::string format_number(double value) {
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) throw IoError("number formatting failed");
    return std::string(buf.data(), end);
}

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw IoError("missing CSV column '" + name + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV file " + path.string());
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) table.header.push_back(cell);
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        row.reserve(table.header.size());
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (p <= end) {
            const char* comma = p;
            while (comma < end && *comma != ',') ++comma;
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(p, comma, v);
            if (ec != std::errc{} || ptr != comma) {
                throw IoError("bad number in " + path.string() + " line " + std::to_string(line_no));
            }
            row.push_back(v);
            p = comma + 1;
        }
        if (row.size() != table.header.size()) {
            throw IoError("column count mismatch in " + path.string() + " line " + std::to_string(line_no));
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::size_t i = 0; i < table.header.size(); ++i) out << (i ? "," : "") << table.header[i];
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fokkerid
