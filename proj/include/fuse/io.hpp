#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "fuse/data.hpp"
#include "fuse/errors.hpp"
#include "fuse/fuse.hpp"
#include "fuse/kernels.hpp"
#include "fuse/regressor.hpp"
#include "fuse/twolayer.hpp"

namespace fuse {

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kPlanFormatVersion = 1;

/// Writes to a sibling temporary file, then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw DataError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace detail {

inline std::vector<double> row_major(const MatrixXd& M) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(M.size()));
    for (Index i = 0; i < M.rows(); ++i)
        for (Index j = 0; j < M.cols(); ++j) out.push_back(M(i, j));
    return out;
}

inline MatrixXd from_row_major(const std::vector<double>& v, Index rows, Index cols) {
    if (static_cast<Index>(v.size()) != rows * cols)
        throw FormatError("matrix payload has " + std::to_string(v.size()) + " entries, expected " +
                          std::to_string(rows * cols));
    MatrixXd M(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) M(i, j) = v[static_cast<std::size_t>(i * cols + j)];
    return M;
}

inline std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

inline void check_version(const nlohmann::json& j, int expected, const char* what) {
    if (!j.is_object() || !j.contains("format_version"))
        throw FormatError(std::string(what) + " file has no format_version");
    const int v = j.at("format_version").get<int>();
    if (v != expected)
        throw FormatError(std::string(what) + " file has format_version " + std::to_string(v) + ", this build reads " +
                          std::to_string(expected));
}

}  // namespace detail

/// A fitted model plus the input preprocessing needed to query it.
struct ModelFile {
    FittedModel model;
    std::vector<std::string> feature_names;
    std::optional<FeatureScaling> input_scaling;
};

inline nlohmann::json model_to_json(const ModelFile& mf) {
    const FittedModel& m = mf.model;
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["family"] = to_string(m.family);
    j["sigma_mode"] = to_string(m.sigma.mode());
    j["sigma_dim"] = m.sigma.dim();
    j["sigma_entries"] = detail::row_major(m.sigma.matrix());
    j["centers"] = {{"n", m.centers.rows()}, {"d", m.centers.cols()}, {"data", detail::row_major(m.centers)}};
    j["coeffs"] = detail::to_std(m.coeffs);
    j["ridge_lambda"] = m.ridge_lambda;
    j["jitter_used"] = m.jitter_used;
    if (!mf.feature_names.empty()) j["feature_names"] = mf.feature_names;
    if (mf.input_scaling)
        j["input_scaling"] = {{"min", detail::to_std(mf.input_scaling->min)},
                              {"range", detail::to_std(mf.input_scaling->range)}};
    return j;
}

inline ShapeMatrix sigma_from_entries(ShapeMode mode, const MatrixXd& S) {
    switch (mode) {
        case ShapeMode::Isotropic: return ShapeMatrix::isotropic(S(0, 0), S.rows());
        case ShapeMode::Diagonal: return ShapeMatrix::diagonal(S.diagonal());
        case ShapeMode::Full: return ShapeMatrix::full(S);
    }
    throw FormatError("bad sigma mode");
}

inline ModelFile model_from_json(const nlohmann::json& j) {
    detail::check_version(j, kModelFormatVersion, "model");
    try {
        ModelFile mf;
        FittedModel& m = mf.model;
        m.family = parse_family(j.at("family").get<std::string>());
        const ShapeMode mode = parse_mode(j.at("sigma_mode").get<std::string>());
        const Index d = j.at("sigma_dim").get<Index>();
        m.sigma = sigma_from_entries(mode, detail::from_row_major(j.at("sigma_entries").get<std::vector<double>>(), d, d));
        const auto& c = j.at("centers");
        m.centers = detail::from_row_major(c.at("data").get<std::vector<double>>(), c.at("n").get<Index>(),
                                           c.at("d").get<Index>());
        m.coeffs = detail::to_eigen(j.at("coeffs").get<std::vector<double>>());
        m.ridge_lambda = j.at("ridge_lambda").get<double>();
        m.jitter_used = j.at("jitter_used").get<double>();
        if (m.centers.cols() != d || m.coeffs.size() != m.centers.rows())
            throw FormatError("model file is inconsistent: centers/coeffs/sigma sizes disagree");
        if (j.contains("feature_names")) mf.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        if (j.contains("input_scaling")) {
            const auto& s = j.at("input_scaling");
            mf.input_scaling = FeatureScaling{detail::to_eigen(s.at("min").get<std::vector<double>>()),
                                              detail::to_eigen(s.at("range").get<std::vector<double>>())};
        }
        return mf;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model file (format_version ") + std::to_string(kModelFormatVersion) +
                          ") is malformed: " + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("model file is malformed: ") + e.what());
    }
}

inline void save_model(const std::filesystem::path& path, const ModelFile& mf) {
    write_file_atomic(path, model_to_json(mf).dump(1) + "\n");
}

inline ModelFile load_model(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("model file '" + path.string() + "' is not valid JSON (expected format_version " +
                          std::to_string(kModelFormatVersion) + "): " + e.what());
    }
    return model_from_json(j);
}

inline nlohmann::json plan_to_json(const ReductionPlan& plan) {
    nlohmann::json j;
    j["format_version"] = kPlanFormatVersion;
    j["rule"] = to_string(plan.rule);
    j["d"] = plan.dim();
    j["p"] = plan.p;
    j["eigenvalues"] = detail::to_std(plan.spectrum.values);
    j["eigenvectors"] = detail::row_major(plan.spectrum.vectors);
    j["map"] = detail::row_major(plan.map);
    return j;
}

inline ReductionPlan plan_from_json(const nlohmann::json& j) {
    detail::check_version(j, kPlanFormatVersion, "plan");
    try {
        ReductionPlan plan;
        const Index d = j.at("d").get<Index>();
        plan.p = j.at("p").get<Index>();
        plan.rule = parse_rule(j.at("rule").get<std::string>());
        plan.spectrum.values = detail::to_eigen(j.at("eigenvalues").get<std::vector<double>>());
        plan.spectrum.vectors = detail::from_row_major(j.at("eigenvectors").get<std::vector<double>>(), d, d);
        plan.map = detail::from_row_major(j.at("map").get<std::vector<double>>(), plan.p, d);
        if (plan.spectrum.values.size() != d || plan.p < 1 || plan.p > d)
            throw FormatError("plan file is inconsistent");
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("plan file is malformed: ") + e.what());
    }
}

inline void save_plan(const std::filesystem::path& path, const ReductionPlan& plan) {
    write_file_atomic(path, plan_to_json(plan).dump(1) + "\n");
}

inline ReductionPlan load_plan(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("plan file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return plan_from_json(j);
}

inline std::string spectrum_csv(const ReductionPlan& plan) {
    std::ostringstream out;
    out << "rank,eigenvalue_raw,eigenvalue_clamped,retained\n" << std::setprecision(17);
    const VectorXd clamped = clamped_values(plan.spectrum);
    for (Index k = 0; k < plan.dim(); ++k)
        out << k + 1 << ',' << plan.spectrum.values(k) << ',' << clamped(k) << ',' << (k < plan.p ? 1 : 0) << '\n';
    return out.str();
}

/// One row per feature: rank, name, 1-based column index, score.
inline std::string ranking_csv(const FeatureRanking& ranking, const std::vector<std::string>& names) {
    std::ostringstream out;
    out << "rank,feature,index,score\n" << std::setprecision(17);
    for (std::size_t r = 0; r < ranking.size(); ++r) {
        const auto j = static_cast<std::size_t>(ranking[r].feature);
        out << r + 1 << ',' << (j < names.size() ? names[j] : "x" + std::to_string(j + 1)) << ',' << j + 1 << ','
            << ranking[r].score << '\n';
    }
    return out.str();
}

inline std::string trace_csv(const OptimizationTrace& trace) {
    std::ostringstream out;
    write_trace_csv(out, trace);
    return out.str();
}

}  // namespace fuse
