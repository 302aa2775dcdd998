#pragma once

// File and CSV helpers shared by the io-heavy translation units.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "soilgen/common.hpp"

namespace soilgen::detail {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r')
        out.back().pop_back();
    return out;
}

inline double parse_number(const std::string& field, const std::filesystem::path& path,
                           size_t line_no) {
    char* end = nullptr;
    double v = std::strtod(field.c_str(), &end);
    SG_CHECK(end == field.c_str() + field.size() && !field.empty(), io_error, path.string(),
             ":", line_no, ": cannot parse '", field, "' as a number");
    return v;
}

inline std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ifstream open_in(const std::filesystem::path& path,
                             std::ios::openmode mode = std::ios::in) {
    std::ifstream f(path, mode);
    SG_CHECK(f.good(), io_error, "cannot open ", path.string(), " for reading");
    return f;
}

inline std::ofstream open_out(const std::filesystem::path& path,
                              std::ios::openmode mode = std::ios::out) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, mode);
    SG_CHECK(f.good(), io_error, "cannot open ", path.string(), " for writing");
    return f;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    auto f = open_in(path);
    nlohmann::json j = nlohmann::json::parse(f, nullptr, /*allow_exceptions=*/false);
    SG_CHECK(!j.is_discarded(), io_error, path.string(), ": invalid JSON");
    return j;
}

}  // namespace soilgen::detail
