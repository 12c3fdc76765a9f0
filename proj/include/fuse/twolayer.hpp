#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fuse/errors.hpp"
#include "fuse/kernels.hpp"
#include "fuse/numerics.hpp"
#include "fuse/random.hpp"

namespace fuse {

/// Closed-form leave-one-out residuals e_i = c_i / A_ii with
/// c = (K + lambda I)^{-1} f and A = (K + lambda I)^{-1}.
struct LoocvEvaluation {
    double loss = 0.0;
    VectorXd residuals;
    VectorXd grad;  // empty unless requested
    double jitter = 0.0;
};

namespace detail {

inline void check_loocv_inputs(const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& X,
                               const Eigen::Ref<const VectorXd>& f, double ridge_lambda) {
    if (X.rows() < 2) throw ArgumentError("loocv: need at least two points");
    if (f.size() != X.rows()) throw ArgumentError("loocv: target length does not match number of points");
    if (!(ridge_lambda >= 0.0)) throw ArgumentError("loocv: ridge_lambda must be nonnegative");
    sigma.check_dim(X.cols());
}

}  // namespace detail

/// Loss (1/n) sum_i (c_i / A_ii)^2 and, optionally, its gradient over the
/// free entries of sigma.
///
/// With G = dL/dK = (2/n) [A diag(w) A - sym(A u c^T)], u = e / a and
/// w = e^2 / a, the chain rule through q_ij reduces to contract_quad_form_grad.
inline LoocvEvaluation loocv_evaluate(RbfFamily family, const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& X,
                                      const Eigen::Ref<const VectorXd>& f, double ridge_lambda, bool with_grad,
                                      double jitter_start = kDefaultJitter) {
    detail::check_loocv_inputs(sigma, X, f, ridge_lambda);
    const Index n = X.rows();
    const MatrixXd Q = quad_form_matrix(sigma, X);
    MatrixXd K = apply_phi(family, Q);
    K.diagonal().array() += ridge_lambda;
    const SpdFactor factor(K, jitter_start);

    LoocvEvaluation out;
    out.jitter = factor.jitter();
    const double inv_n = 1.0 / static_cast<double>(n);

    if (!with_grad) {
        const VectorXd c = factor.solve(f);
        const VectorXd a = factor.inverse_diagonal();
        out.residuals = c.array() / a.array();
        out.loss = out.residuals.squaredNorm() * inv_n;
        return out;
    }

    const MatrixXd A = factor.inverse();
    const VectorXd c = A * f;
    const VectorXd a = A.diagonal();
    out.residuals = c.array() / a.array();
    out.loss = out.residuals.squaredNorm() * inv_n;

    const VectorXd u = out.residuals.array() / a.array();
    const VectorXd sqrt_w = out.residuals.array().abs() / a.array().sqrt();
    const VectorXd Au = A * u;

    // A diag(w) A as a symmetric rank-n update, w >= 0.
    const MatrixXd M = A * sqrt_w.asDiagonal();
    MatrixXd G = MatrixXd::Zero(n, n);
    G.selfadjointView<Eigen::Lower>().rankUpdate(M);
    G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
    G.noalias() -= 0.5 * (Au * c.transpose() + c * Au.transpose());
    G *= 2.0 * inv_n;

    // W_ij = G_ij * dphi/dq(q_ij); diagonal pairs have zero difference vectors.
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) G(i, j) *= (i == j) ? 0.0 : phi_dq(family, Q(i, j));
    }
    out.grad = contract_quad_form_grad(sigma, X, G);
    return out;
}

inline double loocv_loss(RbfFamily family, const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& X,
                         const Eigen::Ref<const VectorXd>& f, double ridge_lambda,
                         double jitter_start = kDefaultJitter) {
    return loocv_evaluate(family, sigma, X, f, ridge_lambda, false, jitter_start).loss;
}

inline VectorXd loocv_grad(RbfFamily family, const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& X,
                           const Eigen::Ref<const VectorXd>& f, double ridge_lambda,
                           double jitter_start = kDefaultJitter) {
    return loocv_evaluate(family, sigma, X, f, ridge_lambda, true, jitter_start).grad;
}

struct OptimizerConfig {
    ShapeMode mode = ShapeMode::Diagonal;
    int max_iters = 200;
    double learning_rate = 0.05;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    /// Points per iteration; absent means full batch.
    std::optional<Index> batch_size;
    /// With batching, size of the fixed subset used to score iterates for
    /// best-loss tracking and early stopping; absent means all points.
    std::optional<Index> monitor_size;
    double ridge_lambda = 1e-8;
    std::uint64_t seed = 0;
    /// Sigma_0 = init_scale * I; absent means 1 / sqrt(d).
    std::optional<double> init_scale;
    /// Warm start; overrides init_scale when present.
    std::optional<ShapeMatrix> initial_sigma;
    double tol_rel_loss = 1e-6;
    int patience = 20;

    void validate() const {
        if (max_iters < 1) throw ArgumentError("optimizer: max_iters must be positive");
        if (!(learning_rate > 0.0)) throw ArgumentError("optimizer: learning_rate must be positive");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ArgumentError("optimizer: adam_beta1 must be in [0, 1)");
        if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ArgumentError("optimizer: adam_beta2 must be in [0, 1)");
        if (!(adam_eps > 0.0)) throw ArgumentError("optimizer: adam_eps must be positive");
        if (batch_size && *batch_size < 2) throw ArgumentError("optimizer: batch_size must be at least 2");
        if (monitor_size && *monitor_size < 2) throw ArgumentError("optimizer: monitor_size must be at least 2");
        if (!(ridge_lambda >= 0.0)) throw ArgumentError("optimizer: ridge_lambda must be nonnegative");
        if (init_scale && !(*init_scale > 0.0)) throw ArgumentError("optimizer: init_scale must be positive");
        if (patience < 1) throw ArgumentError("optimizer: patience must be positive");
    }
};

struct IterationRecord {
    int iter = 0;
    double loss = 0.0;        // full-data (or monitor-subset) loss at the iterate
    double batch_loss = 0.0;  // loss on the points the gradient was taken on
    double grad_norm = 0.0;
    bool accepted = false;    // new best loss
    std::vector<std::size_t> batch;  // empty for full batch
};

struct OptimizationTrace {
    std::vector<IterationRecord> records;
    ShapeMatrix final_sigma = ShapeMatrix::isotropic(1.0, 1);
    double best_loss = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations_run = 0;
};

class OptimizationDivergedError : public std::runtime_error {
public:
    OptimizationDivergedError(const std::string& what, OptimizationTrace trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}

    [[nodiscard]] const OptimizationTrace& trace() const noexcept { return trace_; }

private:
    OptimizationTrace trace_;
};

namespace detail {

inline MatrixXd take_rows(const Eigen::Ref<const MatrixXd>& X, const std::vector<std::size_t>& idx) {
    MatrixXd out(static_cast<Index>(idx.size()), X.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = X.row(static_cast<Index>(idx[k]));
    return out;
}

inline VectorXd take(const Eigen::Ref<const VectorXd>& f, const std::vector<std::size_t>& idx) {
    VectorXd out(static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Index>(k)) = f(static_cast<Index>(idx[k]));
    return out;
}

}  // namespace detail

/// Learns Sigma by Adam on the leave-one-out loss.
///
/// Each iteration scores the current iterate on the monitor set (all points
/// unless monitor_size is set together with batch_size), then steps along the
/// gradient of the batch loss. Returns the best-scoring iterate.
inline std::pair<ShapeMatrix, OptimizationTrace> optimize_sigma(RbfFamily family, const Eigen::Ref<const MatrixXd>& X,
                                                                const Eigen::Ref<const VectorXd>& f,
                                                                const OptimizerConfig& config) {
    config.validate();
    const Index n = X.rows();
    const Index d = X.cols();
    if (n < 2) throw ArgumentError("optimize_sigma: need at least two points");
    if (f.size() != n) throw ArgumentError("optimize_sigma: target length does not match number of points");

    ShapeMatrix sigma = ShapeMatrix::scaled_identity(config.mode, d, config.init_scale.value_or(1.0 / std::sqrt(static_cast<double>(d))));
    if (config.initial_sigma) {
        if (config.initial_sigma->mode() != config.mode || config.initial_sigma->dim() != d)
            throw ArgumentError("optimize_sigma: initial_sigma does not match mode/dimension");
        sigma = *config.initial_sigma;
    }

    const bool batched = config.batch_size && *config.batch_size < n;
    Rng batch_rng(config.seed);
    std::vector<std::size_t> monitor;
    if (batched && config.monitor_size && *config.monitor_size < n) {
        Rng monitor_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
        monitor = monitor_rng.sample(static_cast<std::size_t>(n), static_cast<std::size_t>(*config.monitor_size));
    }
    const MatrixXd Xm = monitor.empty() ? MatrixXd(X) : detail::take_rows(X, monitor);
    const VectorXd fm = monitor.empty() ? VectorXd(f) : detail::take(f, monitor);

    VectorXd params = sigma.params();
    VectorXd m1 = VectorXd::Zero(params.size());
    VectorXd m2 = VectorXd::Zero(params.size());
    double b1t = 1.0, b2t = 1.0;

    OptimizationTrace trace;
    trace.final_sigma = sigma;
    int since_improvement = 0;

    for (int it = 0; it < config.max_iters; ++it) {
        const ShapeMatrix current = ShapeMatrix::from_params(config.mode, d, params);
        IterationRecord rec;
        rec.iter = it;

        LoocvEvaluation step;
        if (batched) {
            rec.batch = batch_rng.sample(static_cast<std::size_t>(n), static_cast<std::size_t>(*config.batch_size));
            step = loocv_evaluate(family, current, detail::take_rows(X, rec.batch), detail::take(f, rec.batch),
                                  config.ridge_lambda, true);
            rec.loss = loocv_loss(family, current, Xm, fm, config.ridge_lambda);
        } else {
            step = loocv_evaluate(family, current, X, f, config.ridge_lambda, true);
            rec.loss = step.loss;
        }
        rec.batch_loss = step.loss;
        rec.grad_norm = step.grad.norm();

        if (!std::isfinite(rec.loss) || !std::isfinite(rec.batch_loss) || !step.grad.allFinite()) {
            trace.records.push_back(std::move(rec));
            trace.iterations_run = it + 1;
            throw OptimizationDivergedError("optimize_sigma: non-finite loss or gradient at iteration " +
                                                std::to_string(it),
                                            std::move(trace));
        }

        if (rec.loss < trace.best_loss) {
            const bool significant =
                !std::isfinite(trace.best_loss) || rec.loss < trace.best_loss * (1.0 - config.tol_rel_loss);
            trace.best_loss = rec.loss;
            trace.final_sigma = current;
            rec.accepted = true;
            since_improvement = significant ? 0 : since_improvement + 1;
        } else {
            ++since_improvement;
        }
        trace.records.push_back(rec);
        trace.iterations_run = it + 1;
        if (since_improvement >= config.patience) {
            trace.converged = true;
            break;
        }

        // Adam step
        b1t *= config.adam_beta1;
        b2t *= config.adam_beta2;
        m1 = config.adam_beta1 * m1 + (1.0 - config.adam_beta1) * step.grad;
        m2 = config.adam_beta2 * m2 + (1.0 - config.adam_beta2) * step.grad.cwiseAbs2();
        const VectorXd mhat = m1 / (1.0 - b1t);
        const VectorXd vhat = m2 / (1.0 - b2t);
        params.array() -= config.learning_rate * mhat.array() / (vhat.array().sqrt() + config.adam_eps);
    }
    return {trace.final_sigma, trace};
}

/// Writes iter,loss,grad_norm rows for plotting.
inline void write_trace_csv(std::ostream& out, const OptimizationTrace& trace) {
    out << "iter,loss,grad_norm\n";
    out.precision(17);
    for (const auto& r : trace.records) out << r.iter << ',' << r.loss << ',' << r.grad_norm << '\n';
}

}  // namespace fuse
