#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "ikl/errors.hpp"
#include "ikl/matrix.hpp"
#include "ikl/prng.hpp"

namespace ikl {

struct LabeledDataset {
    DenseMatrix x;
    std::vector<double> y;  // labels in {-1, +1}
    std::string split;

    std::size_t size() const { return x.rows(); }
    std::size_t dim() const { return x.cols(); }
};

inline void validate_labels(const LabeledDataset& d) {
    if (d.y.size() != d.x.rows()) throw ValidationError("dataset: label count != row count");
    for (double v : d.y)
        if (v != 1.0 && v != -1.0) throw ValidationError("dataset: labels must be exactly +1/-1");
}

inline double norm_sphere_label(const double* x, std::size_t d) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += x[j] * x[j];
    const double v = std::sqrt(sq) - std::sqrt(static_cast<double>(d));
    return v < 0.0 ? -1.0 : 1.0;  // sign(0) := +1
}

// x ~ N(0, I_d), y = sign(|x| - sqrt(d)). The task where a unit-bandwidth
// Gaussian spectral distribution is a poor fit once d grows.
inline LabeledDataset gen_norm_sphere(std::size_t n, std::size_t d, Prng& prng,
                                      std::string split = "") {
    LabeledDataset out;
    out.x = DenseMatrix(n, d);
    for (double& v : out.x.data()) v = prng.next_normal();
    out.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.y[i] = norm_sphere_label(out.x.row(i), d);
    out.split = std::move(split);
    return out;
}

inline DenseMatrix ring_centers(std::size_t modes, double radius) {
    DenseMatrix c(modes, 2);
    for (std::size_t k = 0; k < modes; ++k) {
        const double a = 2.0 * 3.14159265358979323846 * static_cast<double>(k) /
                         static_cast<double>(modes);
        c(k, 0) = radius * std::cos(a);
        c(k, 1) = radius * std::sin(a);
    }
    return c;
}

// Equal-weight Gaussians on a circle; the toy generation target.
inline DenseMatrix gen_ring_mixture(std::size_t n, std::size_t modes, double radius, double sigma,
                                    Prng& prng) {
    if (modes < 1) throw ValidationError("gen_ring_mixture: need at least one mode");
    const DenseMatrix centers = ring_centers(modes, radius);
    DenseMatrix out(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(prng.next_u64() % modes);
        out(i, 0) = centers(k, 0) + sigma * prng.next_normal();
        out(i, 1) = centers(k, 1) + sigma * prng.next_normal();
    }
    return out;
}

// Shortest decimal that round-trips, via std::to_chars.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& tok, std::size_t line_no) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw ParseError("CSV line " + std::to_string(line_no) + ": bad number '" + tok + "'");
    return v;
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}
}  // namespace detail

// Label-first CSV, no header by default.
inline LabeledDataset load_csv(const std::string& path, bool skip_header = false) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    LabeledDataset out;
    std::vector<double> values;
    std::size_t cols = 0, rows = 0, line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (skip_header && line_no == 1) continue;
        if (line.empty()) continue;
        const auto toks = detail::split_csv_line(line);
        if (toks.size() < 2)
            throw ParseError("CSV line " + std::to_string(line_no) + ": need label plus features");
        if (cols == 0) cols = toks.size() - 1;
        if (toks.size() - 1 != cols)
            throw ParseError("CSV line " + std::to_string(line_no) + ": expected " +
                             std::to_string(cols + 1) + " fields, got " +
                             std::to_string(toks.size()));
        const double label = parse_double(toks[0], line_no);
        if (label != 1.0 && label != -1.0)
            throw ValidationError("CSV line " + std::to_string(line_no) +
                                  ": label must be +1 or -1");
        out.y.push_back(label);
        for (std::size_t j = 1; j < toks.size(); ++j) values.push_back(parse_double(toks[j], line_no));
        ++rows;
    }
    if (rows == 0) throw ParseError("CSV '" + path + "': no data rows");
    out.x = DenseMatrix(rows, cols, std::move(values));
    return out;
}

inline void save_csv(const std::string& path, const LabeledDataset& d) {
    validate_labels(d);
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path + "'");
    for (std::size_t i = 0; i < d.size(); ++i) {
        out << (d.y[i] > 0 ? "1" : "-1");
        for (std::size_t j = 0; j < d.dim(); ++j) out << ',' << format_double(d.x(i, j));
        out << '\n';
    }
}

// Feature rows for external classifiers, label column first when given.
inline void save_features_csv(const std::string& path, const DenseMatrix& features,
                              const std::vector<double>* labels = nullptr) {
    if (labels && labels->size() != features.rows())
        throw DimensionError("save_features_csv: label count != row count");
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path + "'");
    for (std::size_t i = 0; i < features.rows(); ++i) {
        if (labels) out << ((*labels)[i] > 0 ? "1," : "-1,");
        for (std::size_t j = 0; j < features.cols(); ++j) {
            if (j) out << ',';
            out << format_double(features(i, j));
        }
        out << '\n';
    }
}

inline void save_matrix_csv(const std::string& path, const DenseMatrix& m) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path + "'");
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

}  // namespace ikl
