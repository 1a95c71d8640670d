#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cace/errors.hpp"
#include "cace/model.hpp"
#include "cace/simulator.hpp"

// Comma-separated input with a header row. Cells are numeric and unquoted.
namespace cace {

struct ColumnMapping {
    std::string y1 = "y1";
    std::string y2 = "y2";
    std::string z = "z";
    std::string x = "x";
    std::string id = "id";  // optional; row number is used when absent
    std::vector<std::string> covariates;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_number(std::string_view cell, std::size_t row, const std::string& column) {
    if (cell.empty())
        throw ValidationError("missing value in row " + std::to_string(row) + ", column '" + column + "'");
    double v = 0.0;
    const auto* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ValidationError("non-numeric value '" + std::string(cell) + "' in row " + std::to_string(row) +
                              ", column '" + column + "'");
    return v;
}

inline int parse_binary(std::string_view cell, std::size_t row, const std::string& column) {
    const double v = parse_number(cell, row, column);
    if (v != 0.0 && v != 1.0)
        throw ValidationError("value '" + std::string(cell) + "' in row " + std::to_string(row) + ", column '" +
                              column + "' is not binary (expected 0 or 1)");
    return static_cast<int>(v);
}

}  // namespace detail

// Row numbers in messages count data rows from 1 (the header is row 0).
inline Dataset parse_csv(std::istream& in, const ColumnMapping& mapping, std::vector<std::string>* warnings = nullptr) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line).empty()) throw ValidationError("input is empty (no header row)");
    const auto header_views = detail::split_commas(line);
    std::map<std::string, std::size_t, std::less<>> index;
    std::vector<std::string> header;
    for (std::size_t j = 0; j < header_views.size(); ++j) {
        header.emplace_back(header_views[j]);
        index.emplace(header.back(), j);
    }
    auto locate = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ValidationError("required column '" + name + "' not found in header");
        return it->second;
    };
    const auto c_y1 = locate(mapping.y1), c_y2 = locate(mapping.y2), c_z = locate(mapping.z), c_x = locate(mapping.x);
    std::vector<std::size_t> c_cov;
    for (const auto& name : mapping.covariates) c_cov.push_back(locate(name));
    const auto id_it = index.find(mapping.id);
    const bool has_id = id_it != index.end();

    if (warnings) {
        for (const auto& h : header) {
            const bool used = h == mapping.y1 || h == mapping.y2 || h == mapping.z || h == mapping.x ||
                              (has_id && h == mapping.id) ||
                              std::find(mapping.covariates.begin(), mapping.covariates.end(), h) !=
                                  mapping.covariates.end();
            if (!used) warnings->push_back("ignoring unmapped column '" + h + "'");
        }
    }

    std::vector<SubjectRecord> records;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split_commas(line);
        if (cells.size() != header.size())
            throw ValidationError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                  " cells, header has " + std::to_string(header.size()));
        for (std::size_t j = 0; j < cells.size(); ++j)
            if (cells[j].empty())
                throw ValidationError("missing value in row " + std::to_string(row) + ", column '" + header[j] + "'");
        SubjectRecord r;
        r.id = has_id ? std::string(cells[id_it->second]) : std::to_string(row);
        r.y1 = detail::parse_binary(cells[c_y1], row, mapping.y1);
        r.y2 = detail::parse_binary(cells[c_y2], row, mapping.y2);
        r.z = detail::parse_binary(cells[c_z], row, mapping.z);
        r.x = detail::parse_binary(cells[c_x], row, mapping.x);
        for (std::size_t k = 0; k < c_cov.size(); ++k)
            r.covariates.push_back(detail::parse_number(cells[c_cov[k]], row, mapping.covariates[k]));
        records.push_back(std::move(r));
    }
    if (records.empty()) throw ValidationError("input has a header but no data rows");
    return Dataset(std::move(records), mapping.covariates);
}

inline Dataset load_csv(const std::string& path, const ColumnMapping& mapping,
                        std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return parse_csv(in, mapping, warnings);
}

// Shortest representation that parses back to the same double.
inline std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline void write_csv(std::ostream& out, const Dataset& data) {
    out << "id,y1,y2,z,x";
    for (const auto& c : data.covariate_names()) out << ',' << c;
    out << '\n';
    for (const auto& r : data.records()) {
        out << r.id << ',' << r.y1 << ',' << r.y2 << ',' << r.z << ',' << r.x;
        for (double v : r.covariates) out << ',' << format_number(v);
        out << '\n';
    }
}

inline void write_truth_csv(std::ostream& out, const SimulatedDataset& sim) {
    out << "id,u,true_class\n";
    for (std::size_t i = 0; i < sim.latent_u.size(); ++i)
        out << sim.dataset[i].id << ',' << format_number(sim.latent_u[i]) << ','
            << static_cast<int>(sim.true_class[i]) << '\n';
}

inline void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << contents;
    if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace cace
