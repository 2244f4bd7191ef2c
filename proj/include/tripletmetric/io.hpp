#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tripletmetric/descent.hpp"
#include "tripletmetric/error.hpp"
#include "tripletmetric/fairness.hpp"
#include "tripletmetric/spectral.hpp"
#include "tripletmetric/types.hpp"

namespace tripletmetric::io {

/// Shortest decimal form that round-trips a double (17 significant digits).
inline std::string format_double(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream stream(line);
    while (std::getline(stream, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

inline double parse_double(const std::string& cell, std::size_t line, std::size_t column) {
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw DataError("cannot parse '" + cell + "' as a number at line " +
                        std::to_string(line) + ", column " + std::to_string(column));
    return value;
}

inline long long parse_integer(const std::string& cell, std::size_t line, std::size_t column) {
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw DataError("cannot parse '" + cell + "' as an integer at line " +
                        std::to_string(line) + ", column " + std::to_string(column));
    return value;
}

inline std::ifstream open_for_read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    return out;
}

} // namespace detail

/// Writes a dense matrix as headerless CSV, row-major, full precision.
inline void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& matrix) {
    std::ofstream out = detail::open_for_write(path);
    for (Index i = 0; i < matrix.rows(); ++i) {
        for (Index j = 0; j < matrix.cols(); ++j) {
            if (j > 0) out << ',';
            out << format_double(matrix(i, j));
        }
        out << '\n';
    }
    if (!out) throw DataError("failed writing '" + path + "'");
}

/// Reads a rectangular numeric CSV into a matrix.
inline Eigen::MatrixXd read_matrix_csv(const std::string& path) {
    std::ifstream in = detail::open_for_read(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_number = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_line(line);
        if (width == 0) width = cells.size();
        if (cells.size() != width)
            throw DataError("ragged row at line " + std::to_string(line_number) + " of '" + path +
                            "': expected " + std::to_string(width) + " cells, got " +
                            std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c)
            row.push_back(detail::parse_double(cells[c], line_number, c + 1));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("'" + path + "' contains no data rows");
    Eigen::MatrixXd matrix(static_cast<Index>(rows.size()), static_cast<Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j)
            matrix(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return matrix;
}

/// Reads a feature table: one row per individual, rejecting non-finite
/// values with their location. With `has_header` the first line is skipped.
inline Eigen::MatrixXd ingest_csv(const std::string& path, bool has_header) {
    std::ifstream in = detail::open_for_read(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_number = 0;
    std::size_t width = 0;
    bool pending_header = has_header;
    while (std::getline(in, line)) {
        ++line_number;
        if (pending_header) {
            pending_header = false;
            continue;
        }
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_line(line);
        if (width == 0) width = cells.size();
        if (cells.size() != width)
            throw DataError("ragged row at line " + std::to_string(line_number) + " of '" + path +
                            "': expected " + std::to_string(width) + " cells, got " +
                            std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const double value = detail::parse_double(cells[c], line_number, c + 1);
            if (!std::isfinite(value))
                throw DataError("non-finite value at line " + std::to_string(line_number) +
                                ", column " + std::to_string(c + 1) + " of '" + path + "'");
            row.push_back(value);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("'" + path + "' contains no data rows");
    Eigen::MatrixXd features(static_cast<Index>(rows.size()), static_cast<Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j)
            features(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    validate_features(features);
    return features;
}

/// Triplet CSV contents; responses are present when the file carried a
/// y column.
struct TripletFile {
    std::vector<Triplet> triplets;
    std::vector<int> responses;
    bool has_responses = false;

    TripletBatch to_batch(Index n, double sampling_rate = 1.0) const {
        if (!has_responses)
            throw DataError("triplet file has no response column");
        TripletBatch batch;
        batch.n = n;
        batch.sampling_rate = sampling_rate;
        batch.responses.reserve(triplets.size());
        for (std::size_t idx = 0; idx < triplets.size(); ++idx)
            batch.responses.push_back({triplets[idx], responses[idx]});
        batch.validate();
        return batch;
    }
};

/// Writes triplets with the header `i,j,k`.
inline void write_triplet_csv(const std::string& path, const std::vector<Triplet>& triplets) {
    std::ofstream out = detail::open_for_write(path);
    out << "i,j,k\n";
    for (const Triplet& t : triplets) out << t.i << ',' << t.j << ',' << t.k << '\n';
    if (!out) throw DataError("failed writing '" + path + "'");
}

/// Writes responses with the header `i,j,k,y`, y in {-1, 1}.
inline void write_triplet_csv(const std::string& path, const TripletBatch& batch) {
    std::ofstream out = detail::open_for_write(path);
    out << "i,j,k,y\n";
    for (const TripletResponse& r : batch.responses)
        out << r.t.i << ',' << r.t.j << ',' << r.t.k << ',' << r.y << '\n';
    if (!out) throw DataError("failed writing '" + path + "'");
}

/// Reads a triplet CSV written by either writer.
inline TripletFile read_triplet_csv(const std::string& path) {
    std::ifstream in = detail::open_for_read(path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
    const std::string header = detail::trim(line);
    TripletFile file;
    if (header == "i,j,k,y")
        file.has_responses = true;
    else if (header != "i,j,k")
        throw DataError("'" + path + "' must start with header 'i,j,k' or 'i,j,k,y'");
    const std::size_t expected = file.has_responses ? 4 : 3;
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_line(line);
        if (cells.size() != expected)
            throw DataError("line " + std::to_string(line_number) + " of '" + path + "' has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(expected));
        Triplet t;
        t.i = static_cast<Index>(detail::parse_integer(cells[0], line_number, 1));
        t.j = static_cast<Index>(detail::parse_integer(cells[1], line_number, 2));
        t.k = static_cast<Index>(detail::parse_integer(cells[2], line_number, 3));
        file.triplets.push_back(t);
        if (file.has_responses) {
            const long long y = detail::parse_integer(cells[3], line_number, 4);
            if (y != 1 && y != -1)
                throw DataError("response at line " + std::to_string(line_number) +
                                " must be -1 or 1, got " + std::to_string(y));
            file.responses.push_back(static_cast<int>(y));
        }
    }
    return file;
}

/// Writes a training trace with the header
/// `iter,loss,grad_norm,aligned_error,wallclock_ms`. The aligned_error cell
/// is empty when no reference factor was configured; the wallclock cell is
/// empty when `deterministic` output was requested.
inline void write_trace_csv(const std::string& path, const TrainTrace& trace,
                            bool deterministic = false) {
    std::ofstream out = detail::open_for_write(path);
    out << "iter,loss,grad_norm,aligned_error,wallclock_ms\n";
    for (const TraceSample& sample : trace.samples) {
        out << sample.iter << ',' << format_double(sample.loss) << ','
            << format_double(sample.grad_norm) << ',';
        if (sample.aligned_error.has_value()) out << format_double(*sample.aligned_error);
        out << ',';
        if (!deterministic) out << format_double(sample.wallclock_ms);
        out << '\n';
    }
    if (!out) throw DataError("failed writing '" + path + "'");
}

inline nlohmann::json to_json(const InitReport& report) {
    nlohmann::json j;
    j["n_total"] = report.n_total;
    j["n_retained"] = report.n_retained;
    j["index_map"] = report.index_map;
    j["floor_count"] = report.floor_count;
    j["rank_centrality_iterations"] = report.rc_iterations;
    j["skipped_anchors"] = report.skipped_anchors;
    j["eigenvalues"] = std::vector<double>(report.eigenvalues.data(),
                                           report.eigenvalues.data() + report.eigenvalues.size());
    j["clipped_eigenvalues"] = report.clipped_eigenvalues;
    j["warnings"] = report.warnings;
    return j;
}

inline nlohmann::json to_json(const AuditReport& report) {
    nlohmann::json j;
    j["l_max"] = report.infinite ? nlohmann::json("inf") : nlohmann::json(report.l_max);
    j["infinite"] = report.infinite;
    j["zero_distance_violations"] = report.zero_distance_violations;
    j["pairs_evaluated"] = report.pairs_evaluated;
    j["pairs_skipped_zero"] = report.pairs_skipped_zero;
    j["xi_quantiles"] = {{"q50", report.q50}, {"q90", report.q90}, {"q99", report.q99}};
    j["finite_ratios"] = report.finite_ratios;
    return j;
}

inline nlohmann::json to_json(const CertificationRecord& record) {
    nlohmann::json j;
    j["audit_estimated"] = to_json(record.audit_estimated);
    j["audit_true"] = to_json(record.audit_true);
    j["l_hat"] = record.l_hat;
    j["l_star"] = record.l_star;
    j["epsilon"] = record.epsilon;
    j["sigma_min"] = record.sigma_min;
    j["bound"] = std::isfinite(record.bound) ? nlohmann::json(record.bound)
                                             : nlohmann::json("inf");
    j["holds"] = record.holds;
    return j;
}

} // namespace tripletmetric::io
