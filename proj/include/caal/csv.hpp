#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace caal::csv {

/// Shortest round-trippable decimal form of a double ("%.17g" style, trimmed).
std::string format_double(double value);

/// Splits one line on commas. No quoting support; none of our schemas need it.
std::vector<std::string> split_line(std::string_view line);

/// Reads a whole CSV stream. Lines starting with '#' and blank lines are skipped.
std::vector<std::vector<std::string>> read_rows(std::istream& in);

double parse_double(const std::string& field, std::string_view column);
long long parse_int(const std::string& field, std::string_view column);

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void comment(std::string_view text);
    void header(const std::vector<std::string>& columns);

    Writer& field(std::string_view text);
    Writer& field(double value);
    Writer& field(long long value);
    Writer& field(int value) { return field(static_cast<long long>(value)); }
    Writer& field(std::size_t value) { return field(static_cast<long long>(value)); }
    Writer& field(bool value) { return field(static_cast<long long>(value ? 1 : 0)); }
    void end_row();

private:
    std::ostream& out_;
    bool row_started_ = false;
};

}  // namespace caal::csv
