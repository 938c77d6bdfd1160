#pragma once
// Small strict CSV helpers. No quoting support: identifiers in this project
// never contain commas, and every format we read or write is one we define.

#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace actigen::csv {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

inline double parse_double(const std::string& field, const char* what, size_t line_no) {
    if (field.empty())
        throw std::invalid_argument(std::string("empty ") + what + " at line " + std::to_string(line_no));
    size_t consumed = 0;
    double v = 0;
    try {
        v = std::stod(field, &consumed);
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("bad ") + what + " '" + field + "' at line " +
                                    std::to_string(line_no));
    }
    if (consumed != field.size())
        throw std::invalid_argument(std::string("bad ") + what + " '" + field + "' at line " +
                                    std::to_string(line_no));
    return v;
}

inline long long parse_int(const std::string& field, const char* what, size_t line_no) {
    if (field.empty())
        throw std::invalid_argument(std::string("empty ") + what + " at line " + std::to_string(line_no));
    size_t consumed = 0;
    long long v = 0;
    try {
        v = std::stoll(field, &consumed);
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("bad ") + what + " '" + field + "' at line " +
                                    std::to_string(line_no));
    }
    if (consumed != field.size())
        throw std::invalid_argument(std::string("bad ") + what + " '" + field + "' at line " +
                                    std::to_string(line_no));
    return v;
}

inline std::optional<double> parse_optional_double(const std::string& field, const char* what,
                                                   size_t line_no) {
    if (field.empty()) return std::nullopt;
    return parse_double(field, what, line_no);
}

// 9 significant digits: round-trips float-precision data and keeps files stable.
inline std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace actigen::csv
