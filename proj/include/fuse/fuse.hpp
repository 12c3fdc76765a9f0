#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fuse/errors.hpp"
#include "fuse/kernels.hpp"
#include "fuse/numerics.hpp"

namespace fuse {

/// Eigenvalues below this are shown as this value in reports.
inline constexpr double kMachineEpsilon = 2.22e-16;

/// Eigendecomposition of Theta = Sigma^T Sigma (raw values, descending).
///
/// Isotropic and diagonal Sigma are decomposed exactly: eigenvalues are the
/// squared scales and eigenvectors are coordinate axes, ordered stably.
inline EigenSpectrum decompose_theta(const ShapeMatrix& sigma) {
    const Index d = sigma.dim();
    if (sigma.mode() == ShapeMode::Full) return eigh_sorted(sigma.theta());

    VectorXd sq(d);
    for (Index j = 0; j < d; ++j) {
        const double e = sigma.mode() == ShapeMode::Isotropic ? sigma.params()(0) : sigma.params()(j);
        sq(j) = e * e;
    }
    std::vector<Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return sq(a) > sq(b); });
    EigenSpectrum out{VectorXd(d), MatrixXd::Zero(d, d)};
    for (Index k = 0; k < d; ++k) {
        const Index j = order[static_cast<std::size_t>(k)];
        out.values(k) = sq(j);
        out.vectors(j, k) = 1.0;
    }
    return out;
}

inline VectorXd clamped_values(const EigenSpectrum& spectrum) {
    return spectrum.values.cwiseMax(kMachineEpsilon);
}

struct AbsoluteThreshold {
    double tau;
};
struct RelativeThreshold {
    double tau;
};
struct FixedCount {
    Index p;
};
using ReductionRule = std::variant<AbsoluteThreshold, RelativeThreshold, FixedCount>;

inline std::string to_string(const ReductionRule& rule) {
    std::ostringstream out;
    out << std::setprecision(17);
    std::visit(
        [&out](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, AbsoluteThreshold>) out << "absolute:" << r.tau;
            else if constexpr (std::is_same_v<T, RelativeThreshold>) out << "relative:" << r.tau;
            else out << "count:" << r.p;
        },
        rule);
    return out.str();
}

/// "absolute:1e-2", "relative:1e-4" or "count:3".
inline ReductionRule parse_rule(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ArgumentError("reduction rule must look like kind:value, got '" + text + "'");
    const std::string kind = text.substr(0, colon);
    const std::string value = text.substr(colon + 1);
    try {
        if (kind == "absolute" || kind == "abs") return AbsoluteThreshold{std::stod(value)};
        if (kind == "relative" || kind == "rel") return RelativeThreshold{std::stod(value)};
        if (kind == "count" || kind == "p") return FixedCount{static_cast<Index>(std::stol(value))};
    } catch (const std::logic_error&) {
        throw ArgumentError("bad reduction rule value in '" + text + "'");
    }
    throw ArgumentError("unknown reduction rule kind '" + kind + "' (expected absolute, relative or count)");
}

inline const ReductionRule kDefaultRule = RelativeThreshold{1e-4};

/// Truncated feature map: keep the leading p eigen-directions of Theta.
/// Row k of map is sqrt(lambda_k) v_k^T, so map * x is the mapped point.
struct ReductionPlan {
    EigenSpectrum spectrum;
    Index p = 0;
    MatrixXd map;
    ReductionRule rule = kDefaultRule;

    [[nodiscard]] Index dim() const noexcept { return spectrum.size(); }
};

inline MatrixXd assemble_map(const EigenSpectrum& spectrum, Index p) {
    MatrixXd M(p, spectrum.size());
    for (Index k = 0; k < p; ++k)
        M.row(k) = std::sqrt(std::max(spectrum.values(k), 0.0)) * spectrum.vectors.col(k).transpose();
    return M;
}

/// Applies a selection rule to raw eigenvalues; p is at least 1.
inline ReductionPlan make_plan(const EigenSpectrum& spectrum, const ReductionRule& rule) {
    const Index d = spectrum.size();
    if (d < 1) throw ArgumentError("make_plan: empty spectrum");
    Index p = 0;
    if (const auto* fc = std::get_if<FixedCount>(&rule)) {
        if (fc->p > d) throw ArgumentError("make_plan: requested p exceeds dimension");
        if (fc->p < 1) throw ArgumentError("make_plan: requested p must be at least 1");
        p = fc->p;
    } else {
        const double cut = std::holds_alternative<AbsoluteThreshold>(rule)
                               ? std::get<AbsoluteThreshold>(rule).tau
                               : std::get<RelativeThreshold>(rule).tau * spectrum.values(0);
        for (Index k = 0; k < d; ++k)
            if (spectrum.values(k) >= cut) ++p;
        p = std::max<Index>(p, 1);
    }
    return ReductionPlan{spectrum, p, assemble_map(spectrum, p), rule};
}

/// Same spectrum, first p_new rows of the map.
inline ReductionPlan truncate(const ReductionPlan& plan, Index p_new) {
    if (p_new < 1 || p_new > plan.dim()) throw ArgumentError("truncate: p out of range");
    return ReductionPlan{plan.spectrum, p_new, plan.map.topRows(p_new), FixedCount{p_new}};
}

/// Rows x_i mapped to M x_i (n x p).
inline MatrixXd map_dataset(const ReductionPlan& plan, const Eigen::Ref<const MatrixXd>& X) {
    if (X.cols() != plan.dim())
        throw ArgumentError("map_dataset: plan is " + std::to_string(plan.dim()) + "-dimensional, data has " +
                            std::to_string(X.cols()) + " columns");
    return X * plan.map.transpose();
}

/// V diag(lambda_1..lambda_p, 0..0) V^T = M^T M.
inline MatrixXd reduced_theta(const ReductionPlan& plan) {
    const MatrixXd& V = plan.spectrum.vectors;
    const VectorXd kept = plan.spectrum.values.head(plan.p);
    MatrixXd T = V.leftCols(plan.p) * kept.asDiagonal() * V.leftCols(plan.p).transpose();
    return 0.5 * (T + T.transpose());
}

struct RankedFeature {
    Index feature;  // zero-based column index
    double score;   // Theta_jj = eps_j^2
};

using FeatureRanking = std::vector<RankedFeature>;

/// Features ordered by eps_j^2, descending, stable on ties.
inline FeatureRanking rank_features_diagonal(const ShapeMatrix& sigma) {
    if (sigma.mode() == ShapeMode::Full) throw ArgumentError("rank_features_diagonal: sigma must be diagonal");
    const Index d = sigma.dim();
    FeatureRanking out;
    out.reserve(static_cast<std::size_t>(d));
    for (Index j = 0; j < d; ++j) {
        const double e = sigma.mode() == ShapeMode::Isotropic ? sigma.params()(0) : sigma.params()(j);
        out.push_back({j, e * e});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    return out;
}

}  // namespace fuse
