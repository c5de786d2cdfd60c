#pragma once

#include <Eigen/Dense>

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace evdag {

struct CsvMatrix {
    Eigen::MatrixXd data;
    std::vector<std::string> header;  // empty when the file had no header row
    bool had_header = false;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Parse a numeric CSV: one row per observation, d columns, optional header
/// line (x0,...,x{d-1} or any non-numeric first row). Errors name the
/// offending line and column, both 1-based.
inline CsvMatrix read_csv_matrix(std::istream& is) {
    std::vector<std::vector<double>> rows;
    CsvMatrix out;
    std::string line;
    long line_no = 0;
    std::size_t ncols = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line);
        std::vector<double> row(fields.size());
        bool numeric = true;
        std::size_t bad_col = 0;
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (!detail::parse_double(fields[c], row[c])) {
                numeric = false;
                bad_col = c;
                break;
            }
        }
        if (!numeric) {
            if (rows.empty() && !out.had_header) {
                out.had_header = true;
                out.header = fields;
                ncols = fields.size();
                continue;
            }
            throw std::runtime_error("CSV parse error at row " + std::to_string(line_no) +
                                     ", column " + std::to_string(bad_col + 1) +
                                     ": non-numeric value '" + fields[bad_col] + "'");
        }
        if (ncols == 0) {
            ncols = fields.size();
        } else if (fields.size() != ncols) {
            throw std::runtime_error("CSV parse error at row " + std::to_string(line_no) + ": expected " +
                                     std::to_string(ncols) + " columns, found " +
                                     std::to_string(fields.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("CSV parse error: no data rows");
    out.data.resize(static_cast<long>(rows.size()), static_cast<long>(ncols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < ncols; ++c) out.data(static_cast<long>(r), static_cast<long>(c)) = rows[r][c];
    }
    return out;
}

inline CsvMatrix read_csv_matrix_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open '" + path + "' for reading");
    try {
        return read_csv_matrix(is);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

/// Write a data matrix as CSV, optionally with the x0,...,x{d-1} header.
inline void write_csv_matrix(std::ostream& os, const Eigen::MatrixXd& m, bool header = true) {
    char buf[32];
    if (header) {
        for (long c = 0; c < m.cols(); ++c) os << (c ? ",x" : "x") << c;
        os << '\n';
    }
    for (long r = 0; r < m.rows(); ++r) {
        for (long c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
            if (c) os << ',';
            os << buf;
        }
        os << '\n';
    }
}

}  // namespace evdag
