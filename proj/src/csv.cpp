#include "eyelab/csv.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "eyelab/error.hpp"

namespace eyelab {

std::size_t CsvTable::column(const std::string& name) const {
    auto idx = find_column(name);
    if (!idx) throw DataError(path + ": missing required column '" + name + "'");
    return *idx;
}

std::optional<std::size_t> CsvTable::find_column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    return std::nullopt;
}

namespace {

struct Parser {
    const std::string& text;
    const std::string& path;
    std::size_t pos = 0;
    std::size_t line = 1;

    bool at_end() const { return pos >= text.size(); }

    [[noreturn]] void fail(const std::string& msg) const {
        throw DataError(path + ":" + std::to_string(line) + ": " + msg);
    }

    // Parses one record; returns false at end of input.
    bool next_record(std::vector<std::string>& out, std::size_t& record_line) {
        // Skip blank lines between records.
        while (!at_end() && (text[pos] == '\n' || text[pos] == '\r')) {
            if (text[pos] == '\n') ++line;
            ++pos;
        }
        if (at_end()) return false;
        record_line = line;
        out.clear();
        std::string field;
        bool quoted = false;
        for (;;) {
            if (quoted) {
                if (at_end()) fail("unterminated quoted field");
                char c = text[pos++];
                if (c == '"') {
                    if (!at_end() && text[pos] == '"') {
                        field.push_back('"');
                        ++pos;
                    } else {
                        quoted = false;
                    }
                } else {
                    if (c == '\n') ++line;
                    field.push_back(c);
                }
                continue;
            }
            if (at_end() || text[pos] == '\n' || text[pos] == '\r') {
                out.push_back(std::move(field));
                if (!at_end() && text[pos] == '\r') ++pos;
                if (!at_end() && text[pos] == '\n') {
                    ++pos;
                    ++line;
                }
                return true;
            }
            char c = text[pos++];
            if (c == ',') {
                out.push_back(std::move(field));
                field.clear();
            } else if (c == '"' && field.empty()) {
                quoted = true;
            } else {
                field.push_back(c);
            }
        }
    }
};

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& path) {
    CsvTable table;
    table.path = path;
    Parser p{text, path};
    std::size_t record_line = 0;
    if (!p.next_record(table.header, record_line)) throw DataError(path + ": empty file, expected a header row");
    std::vector<std::string> row;
    while (p.next_record(row, record_line)) {
        if (row.size() != table.header.size()) {
            throw DataError(path + ":" + std::to_string(record_line) + ": expected " +
                            std::to_string(table.header.size()) + " fields, found " + std::to_string(row.size()));
        }
        table.rows.push_back(row);
        table.line_numbers.push_back(record_line);
    }
    return table;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), path);
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

std::string csv_join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += csv_escape(fields[i]);
    }
    return out;
}

std::string format_double_shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double_field(const CsvTable& t, std::size_t row, std::size_t col, const std::string& what) {
    const std::string& s = t.rows[row][col];
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
        throw DataError(t.path + ":" + std::to_string(t.line_numbers[row]) + ": " + what + ": not a finite number: '" +
                        s + "'");
    }
    return v;
}

long parse_long_field(const CsvTable& t, std::size_t row, std::size_t col, const std::string& what) {
    const std::string& s = t.rows[row][col];
    errno = 0;
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
        throw DataError(t.path + ":" + std::to_string(t.line_numbers[row]) + ": " + what + ": not an integer: '" + s +
                        "'");
    }
    return v;
}

}  // namespace eyelab
