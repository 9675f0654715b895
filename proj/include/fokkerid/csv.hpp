#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fokkerid {

// Shortest decimal representation that parses back to the same double.
std::string format_number(double value);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

}  // namespace fokkerid
