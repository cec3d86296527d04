#pragma once

// Minimal comma-separated helpers shared by the CSV readers and writers.
// No quoting support; none of the schemas need it.

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "stone/data_model.hpp"

namespace stone::csv {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline bool is_blank(std::string_view line) { return trim(line).empty(); }

inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

inline int parse_int(std::string_view cell, std::size_t row, const char* what) {
    cell = trim(cell);
    int value = 0;
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty())
        throw DatasetError(std::string("non-numeric ") + what + " '" + std::string(cell) + "'", row);
    return value;
}

inline double parse_double(std::string_view cell, std::size_t row, const char* what) {
    cell = trim(cell);
    double value = 0.0;
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty())
        throw DatasetError(std::string("non-numeric ") + what + " '" + std::string(cell) + "'", row);
    return value;
}

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace stone::csv
