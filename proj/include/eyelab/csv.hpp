#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace eyelab {

// One parsed CSV file: a header row plus data rows, all fields as strings.
struct CsvTable {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line of each row

    // Column index by name; throws DataError naming the file if absent.
    std::size_t column(const std::string& name) const;
    std::optional<std::size_t> find_column(const std::string& name) const;
};

// Reads a CSV file (RFC 4180 quoting, CRLF tolerated). Every row must have
// the same field count as the header; violations raise DataError with
// file and line.
CsvTable read_csv(const std::string& path);

// Parses CSV from an in-memory string; `path` is used only in messages.
CsvTable parse_csv(const std::string& text, const std::string& path);

std::string csv_escape(const std::string& field);
std::string csv_join(const std::vector<std::string>& fields);

// Shortest decimal representation that round-trips to the same double
// ("0.3", not "0.29999999999999999"); used by every emitted data file.
std::string format_double_shortest(double v);

// Field -> typed value converters with file:line context in errors.
double parse_double_field(const CsvTable& t, std::size_t row, std::size_t col, const std::string& what);
long parse_long_field(const CsvTable& t, std::size_t row, std::size_t col, const std::string& what);

}  // namespace eyelab
