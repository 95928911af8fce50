#pragma once

#include <string>
#include <vector>

namespace chf {

/// A CSV file as raw cells. No quoting support; none of the pipeline's
/// schemas carry commas or quotes inside fields.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin);
void write_csv(const std::string& path, const CsvTable& table);

/// Shortest decimal form that round-trips the double exactly.
std::string format_double(double v);

/// Parse a cell as double; empty or unparsable cells raise ValidationError
/// with the row and column named.
double parse_cell(const std::string& cell, std::size_t row, const std::string& column,
                  const std::string& origin);

/// Write text to a file atomically enough for this pipeline (truncate + write).
void write_text_file(const std::string& path, const std::string& text);

std::string read_text_file(const std::string& path);

}  // namespace chf
