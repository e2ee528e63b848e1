#include "caal/csv.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>

#include "caal/errors.hpp"

namespace caal::csv {

std::string format_double(double value) {
    char buf[64];
    // Shortest representation that parses back to the same double.
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::vector<std::vector<std::string>> read_rows(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r" || line[0] == '#') continue;
        rows.push_back(split_line(line));
    }
    return rows;
}

double parse_double(const std::string& field, std::string_view column) {
    try {
        std::size_t used = 0;
        double v = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::exception&) {
        throw InvalidInput("column '" + std::string(column) + "': not a number: '" + field + "'");
    }
}

long long parse_int(const std::string& field, std::string_view column) {
    long long v = 0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
        throw InvalidInput("column '" + std::string(column) + "': not an integer: '" + field + "'");
    return v;
}

void Writer::comment(std::string_view text) { out_ << "# " << text << '\n'; }

void Writer::header(const std::vector<std::string>& columns) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) out_ << ',';
        out_ << columns[i];
    }
    out_ << '\n';
}

Writer& Writer::field(std::string_view text) {
    if (row_started_) out_ << ',';
    out_ << text;
    row_started_ = true;
    return *this;
}

Writer& Writer::field(double value) { return field(std::string_view(format_double(value))); }

Writer& Writer::field(long long value) { return field(std::string_view(std::to_string(value))); }

void Writer::end_row() {
    out_ << '\n';
    row_started_ = false;
}

}  // namespace caal::csv
