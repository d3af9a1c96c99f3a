#pragma once

#include <istream>
#include <map>
#include <string>
#include <vector>

#include "airphys/common.hpp"

namespace airphys::csv {

/// Splits one CSV line. Handles double-quoted fields with "" escapes; no
/// embedded newlines (none of our formats produce them).
std::vector<std::string> split_line(const std::string& line);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column, or -1.
    int column(const std::string& name) const;
    /// Same, but throws SchemaError naming the column.
    int require_column(const std::string& name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);  // throws IoError

void write_file(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows);

std::string to_string(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows);

}  // namespace airphys::csv
