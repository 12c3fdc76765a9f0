#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "fuse/errors.hpp"
#include "fuse/kernels.hpp"
#include "fuse/numerics.hpp"
#include "fuse/random.hpp"

namespace fuse {

/// Kernel interpolant / ridge regressor s(x) = sum_i c_i kappa_Sigma(x, x_i).
/// Immutable once fitted.
struct FittedModel {
    RbfFamily family = RbfFamily::GA;
    ShapeMatrix sigma = ShapeMatrix::isotropic(1.0, 1);
    MatrixXd centers;
    VectorXd coeffs;
    double ridge_lambda = 0.0;
    double jitter_used = 0.0;

    [[nodiscard]] Index dim() const noexcept { return centers.cols(); }
    [[nodiscard]] Index size() const noexcept { return centers.rows(); }
};

/// Solves (K_Sigma + ridge_lambda I) c = f. ridge_lambda = 0 interpolates.
inline FittedModel fit(RbfFamily family, const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& X,
                       const Eigen::Ref<const VectorXd>& f, double ridge_lambda = 0.0,
                       double jitter_start = kDefaultJitter) {
    if (X.rows() < 1) throw ArgumentError("fit: need at least one training point");
    if (f.size() != X.rows()) throw ArgumentError("fit: target length does not match number of points");
    if (!(ridge_lambda >= 0.0)) throw ArgumentError("fit: ridge_lambda must be nonnegative");
    sigma.check_dim(X.cols());

    MatrixXd K = kernel_matrix(family, sigma, X);
    K.diagonal().array() += ridge_lambda;
    const SpdSolution sol = solve_spd(K, f, jitter_start);
    return FittedModel{family, sigma, X, sol.x, ridge_lambda, sol.jitter};
}

inline VectorXd predict(const FittedModel& model, const Eigen::Ref<const MatrixXd>& Q) {
    model.sigma.check_dim(Q.cols());
    return kernel_cross(model.family, model.sigma, Q, model.centers) * model.coeffs;
}

/// Power function P_X evaluator; factors K_Sigma once for many queries.
class PowerFunction {
public:
    PowerFunction(RbfFamily family, ShapeMatrix sigma, const Eigen::Ref<const MatrixXd>& X,
                  double jitter_start = 0.0)
        : family_(family), sigma_(std::move(sigma)), X_(checked_nodes(sigma_, X)),
          factor_(kernel_matrix(family_, sigma_, X_), jitter_start) {}

    /// sqrt(max(0, kappa(q,q) - k(q)^T K^{-1} k(q))), with kappa(q,q) = 1.
    [[nodiscard]] double operator()(const Eigen::Ref<const VectorXd>& q) const {
        sigma_.check_dim(q.size());
        const MatrixXd qrow = q.transpose();
        const VectorXd k = kernel_cross(family_, sigma_, qrow, X_).transpose();
        return std::sqrt(std::max(0.0, 1.0 - factor_.half_solve(k).squaredNorm()));
    }

    [[nodiscard]] double jitter() const noexcept { return factor_.jitter(); }

private:
    static MatrixXd checked_nodes(const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& X) {
        if (X.rows() < 1) throw ArgumentError("power_function: node set must be nonempty");
        sigma.check_dim(X.cols());
        return X;
    }

    RbfFamily family_;
    ShapeMatrix sigma_;
    MatrixXd X_;
    SpdFactor factor_;
};

inline double power_function(RbfFamily family, const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& X,
                             const Eigen::Ref<const VectorXd>& q) {
    return PowerFunction(family, sigma, X)(q);
}

/// sqrt(f^T K_Sigma^{-1} f), the native-space norm of the interpolant of f.
inline double native_norm(RbfFamily family, const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& X,
                          const Eigen::Ref<const VectorXd>& f, double jitter_start = 0.0) {
    if (f.size() != X.rows()) throw ArgumentError("native_norm: target length does not match number of points");
    sigma.check_dim(X.cols());
    const SpdFactor factor(kernel_matrix(family, sigma, X), jitter_start);
    return std::sqrt(std::max(0.0, f.dot(factor.solve(f))));
}

/// Monte-Carlo lower estimate of the fill distance: the largest distance from
/// a probe to its nearest node.
inline double fill_distance(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const MatrixXd>& probes) {
    if (probes.rows() < 1) throw ArgumentError("fill_distance: need at least one probe");
    if (X.rows() < 1) throw ArgumentError("fill_distance: node set must be nonempty");
    if (probes.cols() != X.cols()) throw ArgumentError("fill_distance: dimension mismatch");
    double h = 0.0;
    for (Index p = 0; p < probes.rows(); ++p) {
        const double nearest = (X.rowwise() - probes.row(p)).rowwise().squaredNorm().minCoeff();
        h = std::max(h, nearest);
    }
    return std::sqrt(h);
}

/// fill_distance with m uniform probes of the bounding box of X.
inline double fill_distance(const Eigen::Ref<const MatrixXd>& X, std::uint64_t seed, Index m = 4096) {
    if (X.rows() < 1) throw ArgumentError("fill_distance: node set must be nonempty");
    const VectorXd lo = X.colwise().minCoeff();
    const VectorXd hi = X.colwise().maxCoeff();
    Rng rng(seed);
    MatrixXd probes(m, X.cols());
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < X.cols(); ++j) probes(i, j) = lo(j) + (hi(j) - lo(j)) * rng.uniform();
    return fill_distance(X, probes);
}

struct Metrics {
    double rmse = 0.0;
    std::optional<double> rmsre;
};

inline constexpr double kRelativeErrorGuard = 1e-12;

inline Metrics metrics(const Eigen::Ref<const VectorXd>& truth, const Eigen::Ref<const VectorXd>& pred) {
    if (truth.size() != pred.size()) throw ArgumentError("metrics: truth and prediction lengths differ");
    if (truth.size() < 1) throw ArgumentError("metrics: need at least one value");
    const VectorXd err = truth - pred;
    Metrics m;
    m.rmse = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
    if ((truth.array().abs() >= kRelativeErrorGuard).all()) {
        const VectorXd rel = err.array() / truth.array();
        m.rmsre = std::sqrt(rel.squaredNorm() / static_cast<double>(rel.size()));
    }
    return m;
}

}  // namespace fuse
