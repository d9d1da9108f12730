#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "blockg/cli.hpp"

namespace blockg::cli {
namespace {

// Splits RFC-4180 records: quoted fields may hold commas, newlines and doubled quotes.
std::vector<std::vector<std::string>> split_records(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, field_started = false;
    std::size_t line = 1;
    auto end_field = [&] {
        record.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        // A bare line break (blank line) is skipped, not read as an empty record.
        if (!(record.size() == 1 && record[0].empty())) records.push_back(record);
        record.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (ch == '\n') ++line;
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
            case '"':
                if (field_started) throw DataError("CSV line " + std::to_string(line) + ": stray quote inside a field");
                quoted = field_started = true;
                break;
            case ',': end_field(); break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') break;
                end_record();
                ++line;
                break;
            case '\n':
                end_record();
                ++line;
                break;
            default:
                field.push_back(ch);
                field_started = true;
        }
    }
    if (quoted) throw DataError("CSV ends inside a quoted field");
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

double parse_number(const std::string& s, std::size_t row, const std::string& column) {
    std::size_t b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
    const std::string t = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    if (t.empty()) throw DataError("CSV row " + std::to_string(row) + ", column " + column + ": missing value");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v))
        throw DataError("CSV row " + std::to_string(row) + ", column " + column + ": not a finite number: " + t);
    return v;
}

}  // namespace

int Table::column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == name) return static_cast<int>(j);
    throw DataError("column not found in data: " + name);
}

Table parse_csv(const std::string& text) {
    std::string body = text;
    if (body.rfind("\xEF\xBB\xBF", 0) == 0) body.erase(0, 3);
    const auto records = split_records(body);
    if (records.empty()) throw DataError("CSV has no header row");
    Table t;
    t.hash = fnv1a_hex(text);
    t.header = records[0];
    for (std::size_t j = 0; j < t.header.size(); ++j) {
        if (t.header[j].empty()) throw DataError("CSV header has an empty column name");
        for (std::size_t i = 0; i < j; ++i)
            if (t.header[i] == t.header[j]) throw DataError("CSV header repeats column " + t.header[j]);
    }
    const auto rows = static_cast<Eigen::Index>(records.size() - 1), cols = static_cast<Eigen::Index>(t.header.size());
    t.values.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& rec = records[r + 1];
        if (static_cast<Eigen::Index>(rec.size()) != cols)
            throw DataError("CSV row " + std::to_string(r + 1) + " has " + std::to_string(rec.size()) + " fields, header has " +
                            std::to_string(cols));
        for (Eigen::Index c = 0; c < cols; ++c) t.values(r, c) = parse_number(rec[c], r + 1, t.header[c]);
    }
    return t;
}

Table read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read data file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

}  // namespace blockg::cli
