#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fuse/errors.hpp"
#include "fuse/random.hpp"

namespace fuse {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Per-feature affine map x -> (x - min) / range onto [0, 1].
struct FeatureScaling {
    VectorXd min;
    VectorXd range;

    [[nodiscard]] MatrixXd apply(const Eigen::Ref<const MatrixXd>& X) const {
        if (X.cols() != min.size()) throw ArgumentError("scaling: dimension mismatch");
        return (X.rowwise() - min.transpose()).array().rowwise() / range.transpose().array();
    }

    [[nodiscard]] MatrixXd invert(const Eigen::Ref<const MatrixXd>& X) const {
        if (X.cols() != min.size()) throw ArgumentError("scaling: dimension mismatch");
        return (X.array().rowwise() * range.transpose().array()).matrix().rowwise() + min.transpose();
    }
};

struct Dataset {
    MatrixXd X;
    VectorXd f;
    std::vector<std::string> feature_names;
    std::string target_name = "f";
    std::optional<FeatureScaling> scaling;
    std::uint64_t seed = 0;

    [[nodiscard]] Index size() const noexcept { return X.rows(); }
    [[nodiscard]] Index dim() const noexcept { return X.cols(); }
};

struct SplitDataset {
    Dataset train;
    Dataset test;
    std::vector<std::size_t> train_index;
    std::vector<std::size_t> test_index;
    std::uint64_t seed = 0;
};

inline std::vector<std::string> default_feature_names(Index d) {
    std::vector<std::string> names;
    for (Index j = 0; j < d; ++j) names.push_back("x" + std::to_string(j + 1));
    return names;
}

inline MatrixXd uniform_cube(Index n, Index d, Rng& rng) {
    MatrixXd X(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d; ++j) X(i, j) = rng.uniform();
    return X;
}

/// exp(-sum_{j<6} (x_j - 0.5)^2); ignores coordinates past the sixth.
inline double f1_value(const Eigen::Ref<const VectorXd>& x) {
    double s = 0.0;
    for (Index j = 0; j < 6; ++j) s += (x(j) - 0.5) * (x(j) - 0.5);
    return std::exp(-s);
}

inline void check_alpha(int alpha) {
    if (alpha < -2 || alpha > 2) throw ArgumentError("alpha must be one of -2, -1, 0, 1, 2");
}

/// Mixed-relevance target on 15 features; alpha scales the log terms on x7, x8.
inline double f2_value(const Eigen::Ref<const VectorXd>& x, int alpha) {
    check_alpha(alpha);
    double tail = 0.0;
    for (Index j = 8; j < 15; ++j) tail += x(j);
    return std::exp(x(0) * x(0)) + std::exp(x(1)) + 3.0 * x(2) + std::cos(x(3) * x(4)) + 4.0 * x(5) * x(5) +
           std::pow(10.0, alpha) * (std::log(x(6) + 2.0) + std::log(x(7) + 2.0)) + 1e-8 * tail;
}

inline Dataset gen_f1(Index n, Index d, std::uint64_t seed) {
    if (d < 6) throw ArgumentError("gen_f1: dimension must be at least 6");
    if (n < 1) throw ArgumentError("gen_f1: n must be positive");
    Rng rng(seed);
    Dataset ds;
    ds.X = uniform_cube(n, d, rng);
    ds.f.resize(n);
    for (Index i = 0; i < n; ++i) ds.f(i) = f1_value(ds.X.row(i).transpose());
    ds.feature_names = default_feature_names(d);
    ds.seed = seed;
    return ds;
}

inline Dataset gen_f2(Index n, int alpha, Index d, std::uint64_t seed) {
    check_alpha(alpha);
    if (d != 15) throw ArgumentError("gen_f2: dimension must be 15");
    if (n < 1) throw ArgumentError("gen_f2: n must be positive");
    Rng rng(seed);
    Dataset ds;
    ds.X = uniform_cube(n, d, rng);
    ds.f.resize(n);
    for (Index i = 0; i < n; ++i) ds.f(i) = f2_value(ds.X.row(i).transpose(), alpha);
    ds.feature_names = default_feature_names(d);
    ds.seed = seed;
    return ds;
}

inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.X.resize(static_cast<Index>(idx.size()), ds.dim());
    out.f.resize(static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        out.X.row(static_cast<Index>(k)) = ds.X.row(static_cast<Index>(idx[k]));
        out.f(static_cast<Index>(k)) = ds.f(static_cast<Index>(idx[k]));
    }
    out.feature_names = ds.feature_names;
    out.target_name = ds.target_name;
    out.scaling = ds.scaling;
    out.seed = ds.seed;
    return out;
}

/// Seeded random permutation; the first floor(0.8 n) indices train.
inline SplitDataset split_80_20(const Dataset& ds, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(ds.size());
    if (n < 5) throw ArgumentError("split_80_20: need at least 5 rows");
    Rng rng(seed);
    const auto perm = rng.permutation(n);
    const std::size_t n_train = (8 * n) / 10;
    SplitDataset out;
    out.train_index.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test_index.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    out.train = subset(ds, out.train_index);
    out.test = subset(ds, out.test_index);
    out.seed = seed;
    return out;
}

inline FeatureScaling fit_minmax(const Dataset& ds) {
    FeatureScaling s{ds.X.colwise().minCoeff().transpose(), VectorXd()};
    s.range = ds.X.colwise().maxCoeff().transpose() - s.min;
    for (Index j = 0; j < ds.dim(); ++j) {
        if (!(s.range(j) > 0.0)) {
            const std::string name =
                j < static_cast<Index>(ds.feature_names.size()) ? ds.feature_names[static_cast<std::size_t>(j)]
                                                                : "x" + std::to_string(j + 1);
            throw DegenerateFeatureError(name);
        }
    }
    return s;
}

/// Maps each feature onto [0, 1] and records the scaling.
inline Dataset scale_minmax(const Dataset& ds) {
    Dataset out = ds;
    const FeatureScaling s = fit_minmax(ds);
    out.X = s.apply(ds.X);
    out.scaling = s;
    return out;
}

/// Applies an existing scaling (e.g. fitted on the training split).
inline Dataset apply_scaling(const Dataset& ds, const FeatureScaling& s) {
    Dataset out = ds;
    out.X = s.apply(ds.X);
    out.scaling = s;
    return out;
}

inline Dataset drop_features(const Dataset& ds, const std::vector<std::string>& names) {
    std::vector<Index> keep;
    for (Index j = 0; j < ds.dim(); ++j) {
        const auto& nm = ds.feature_names[static_cast<std::size_t>(j)];
        if (std::find(names.begin(), names.end(), nm) == names.end()) keep.push_back(j);
    }
    Dataset out = ds;
    out.X.resize(ds.size(), static_cast<Index>(keep.size()));
    out.feature_names.clear();
    for (std::size_t k = 0; k < keep.size(); ++k) {
        out.X.col(static_cast<Index>(k)) = ds.X.col(keep[k]);
        out.feature_names.push_back(ds.feature_names[static_cast<std::size_t>(keep[k])]);
    }
    out.scaling.reset();
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

inline std::optional<double> parse_number(std::string_view cell) {
    if (cell.empty()) return std::nullopt;
    if (cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace detail

struct CsvLoad {
    Dataset data;
    std::size_t dropped_rows = 0;
};

/// Reads a header + numeric table; target_column becomes f, the rest become
/// features in header order. Rows with a missing or non-numeric cell are
/// dropped and counted.
inline CsvLoad load_csv(const std::filesystem::path& path, const std::string& target_column) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV file '" + path.string() + "' is empty");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

    const auto header = detail::split_commas(line);
    std::vector<std::string> names(header.begin(), header.end());
    const auto target_it = std::find(names.begin(), names.end(), target_column);
    if (target_it == names.end())
        throw DataError("target column '" + target_column + "' not found in '" + path.string() + "'");
    const auto target_idx = static_cast<std::size_t>(target_it - names.begin());

    CsvLoad out;
    std::vector<double> values;
    std::vector<double> targets;
    std::size_t rows = 0;
    const std::size_t width = names.size();
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_commas(line);
        if (cells.size() != width) {
            ++out.dropped_rows;
            continue;
        }
        std::vector<double> row(width);
        bool ok = true;
        for (std::size_t k = 0; k < width && ok; ++k) {
            const auto v = detail::parse_number(cells[k]);
            ok = v.has_value();
            if (ok) row[k] = *v;
        }
        if (!ok) {
            ++out.dropped_rows;
            continue;
        }
        for (std::size_t k = 0; k < width; ++k) {
            if (k == target_idx) targets.push_back(row[k]);
            else values.push_back(row[k]);
        }
        ++rows;
    }
    if (rows == 0) throw DataError("CSV file '" + path.string() + "' has no usable rows");

    const auto d = static_cast<Index>(width - 1);
    Dataset& ds = out.data;
    ds.X.resize(static_cast<Index>(rows), d);
    ds.f.resize(static_cast<Index>(rows));
    for (std::size_t i = 0; i < rows; ++i) {
        for (Index j = 0; j < d; ++j) ds.X(static_cast<Index>(i), j) = values[i * static_cast<std::size_t>(d) + j];
        ds.f(static_cast<Index>(i)) = targets[i];
    }
    for (std::size_t k = 0; k < width; ++k)
        if (k != target_idx) ds.feature_names.push_back(names[k]);
    ds.target_name = target_column;
    return out;
}

/// Features then target, 17 significant digits.
inline void write_csv(std::ostream& out, const Dataset& ds) {
    for (const auto& name : ds.feature_names) out << name << ',';
    out << ds.target_name << '\n';
    out << std::setprecision(17);
    for (Index i = 0; i < ds.size(); ++i) {
        for (Index j = 0; j < ds.dim(); ++j) out << ds.X(i, j) << ',';
        out << ds.f(i) << '\n';
    }
}

inline void write_csv(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write CSV file '" + path.string() + "'");
    write_csv(out, ds);
}

/// Averages rows that share floor(t / window) for the named time column.
/// The time column must be strictly ascending; empty buckets are skipped.
inline Dataset aggregate_by_window(const Dataset& ds, const std::string& time_column, double window_seconds) {
    if (!(window_seconds > 0.0)) throw ArgumentError("aggregate_by_window: window must be positive");
    const auto it = std::find(ds.feature_names.begin(), ds.feature_names.end(), time_column);
    if (it == ds.feature_names.end()) throw ArgumentError("aggregate_by_window: no column named '" + time_column + "'");
    const auto tcol = static_cast<Index>(it - ds.feature_names.begin());
    for (Index i = 1; i < ds.size(); ++i)
        if (!(ds.X(i, tcol) > ds.X(i - 1, tcol)))
            throw ArgumentError("aggregate_by_window: time column must be strictly ascending");

    std::vector<Index> starts;
    double current = 0.0;
    for (Index i = 0; i < ds.size(); ++i) {
        const double bucket = std::floor(ds.X(i, tcol) / window_seconds);
        if (i == 0 || bucket != current) {
            starts.push_back(i);
            current = bucket;
        }
    }
    starts.push_back(ds.size());

    Dataset out = ds;
    const auto buckets = static_cast<Index>(starts.size() - 1);
    out.X.resize(buckets, ds.dim());
    out.f.resize(buckets);
    for (Index b = 0; b < buckets; ++b) {
        const Index lo = starts[static_cast<std::size_t>(b)];
        const Index len = starts[static_cast<std::size_t>(b) + 1] - lo;
        out.X.row(b) = ds.X.middleRows(lo, len).colwise().mean();
        out.f(b) = ds.f.segment(lo, len).mean();
    }
    out.scaling.reset();
    return out;
}

}  // namespace fuse
