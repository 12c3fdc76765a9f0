#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fuse/errors.hpp"

namespace fuse {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Radial profiles supported by the library.
///   GA: exp(-r^2)   M2: (1 + r) exp(-r)   M0: exp(-r)
enum class RbfFamily { GA, M2, M0 };

inline std::string to_string(RbfFamily family) {
    switch (family) {
        case RbfFamily::GA: return "GA";
        case RbfFamily::M2: return "M2";
        case RbfFamily::M0: return "M0";
    }
    return "?";
}

inline RbfFamily parse_family(std::string_view name) {
    if (name == "GA" || name == "ga") return RbfFamily::GA;
    if (name == "M2" || name == "m2") return RbfFamily::M2;
    if (name == "M0" || name == "m0") return RbfFamily::M0;
    throw ArgumentError("unknown kernel family '" + std::string(name) + "' (expected GA, M2 or M0)");
}

inline constexpr RbfFamily kAllFamilies[] = {RbfFamily::GA, RbfFamily::M2, RbfFamily::M0};

/// phi(r) for r >= 0.
inline double phi(RbfFamily family, double r) {
    if (!(r >= 0.0)) throw ArgumentError("phi: radius must be nonnegative");
    switch (family) {
        case RbfFamily::GA: return std::exp(-r * r);
        case RbfFamily::M2: return (1.0 + r) * std::exp(-r);
        case RbfFamily::M0: return std::exp(-r);
    }
    return 0.0;
}

/// phi(sqrt(q)) evaluated directly from the squared radius.
inline double phi_q(RbfFamily family, double q) {
    switch (family) {
        case RbfFamily::GA: return std::exp(-q);
        case RbfFamily::M2: {
            const double r = std::sqrt(q);
            return (1.0 + r) * std::exp(-r);
        }
        case RbfFamily::M0: return std::exp(-std::sqrt(q));
    }
    return 0.0;
}

inline constexpr double kQuadFloor = 1e-14;

/// d/dq of phi(sqrt(q)). q is floored at 1e-14 before dividing by sqrt(q).
inline double phi_dq(RbfFamily family, double q) {
    switch (family) {
        case RbfFamily::GA: return -std::exp(-q);
        case RbfFamily::M2: return -0.5 * std::exp(-std::sqrt(q));
        case RbfFamily::M0: {
            const double r = std::sqrt(std::max(q, kQuadFloor));
            return -std::exp(-r) / (2.0 * r);
        }
    }
    return 0.0;
}

enum class ShapeMode { Isotropic, Diagonal, Full };

inline std::string to_string(ShapeMode mode) {
    switch (mode) {
        case ShapeMode::Isotropic: return "isotropic";
        case ShapeMode::Diagonal: return "diagonal";
        case ShapeMode::Full: return "full";
    }
    return "?";
}

inline ShapeMode parse_mode(std::string_view name) {
    if (name == "isotropic" || name == "iso") return ShapeMode::Isotropic;
    if (name == "diagonal" || name == "diag") return ShapeMode::Diagonal;
    if (name == "full") return ShapeMode::Full;
    throw ArgumentError("unknown sigma mode '" + std::string(name) + "' (expected isotropic, diagonal or full)");
}

/// The linear map Sigma deforming the kernel metric, Theta = Sigma^T Sigma.
///
/// Only the free entries are stored: one scalar (isotropic), d scalars
/// (diagonal) or d*d entries in row-major order (full). Gradients use the
/// same layout.
class ShapeMatrix {
public:
    static ShapeMatrix isotropic(double eps, Index dim) {
        if (dim < 1) throw ArgumentError("ShapeMatrix: dimension must be positive");
        VectorXd p(1);
        p(0) = eps;
        return ShapeMatrix(ShapeMode::Isotropic, dim, std::move(p));
    }

    static ShapeMatrix diagonal(VectorXd eps) {
        if (eps.size() < 1) throw ArgumentError("ShapeMatrix: dimension must be positive");
        const Index d = eps.size();
        return ShapeMatrix(ShapeMode::Diagonal, d, std::move(eps));
    }

    static ShapeMatrix full(const MatrixXd& sigma) {
        if (sigma.rows() != sigma.cols() || sigma.rows() < 1)
            throw ArgumentError("ShapeMatrix: full sigma must be square and nonempty");
        const Index d = sigma.rows();
        VectorXd p(d * d);
        for (Index a = 0; a < d; ++a)
            for (Index b = 0; b < d; ++b) p(a * d + b) = sigma(a, b);
        return ShapeMatrix(ShapeMode::Full, d, std::move(p));
    }

    static ShapeMatrix from_params(ShapeMode mode, Index dim, VectorXd params) {
        if (dim < 1) throw ArgumentError("ShapeMatrix: dimension must be positive");
        if (params.size() != param_count(mode, dim))
            throw ArgumentError("ShapeMatrix: expected " + std::to_string(param_count(mode, dim)) +
                                " parameters, got " + std::to_string(params.size()));
        return ShapeMatrix(mode, dim, std::move(params));
    }

    /// Sigma = scale * I in the requested mode.
    static ShapeMatrix scaled_identity(ShapeMode mode, Index dim, double scale) {
        switch (mode) {
            case ShapeMode::Isotropic: return isotropic(scale, dim);
            case ShapeMode::Diagonal: return diagonal(VectorXd::Constant(dim, scale));
            case ShapeMode::Full: return full(scale * MatrixXd::Identity(dim, dim));
        }
        throw ArgumentError("ShapeMatrix: bad mode");
    }

    static Index param_count(ShapeMode mode, Index dim) {
        switch (mode) {
            case ShapeMode::Isotropic: return 1;
            case ShapeMode::Diagonal: return dim;
            case ShapeMode::Full: return dim * dim;
        }
        return 0;
    }

    [[nodiscard]] ShapeMode mode() const noexcept { return mode_; }
    [[nodiscard]] Index dim() const noexcept { return dim_; }
    [[nodiscard]] const VectorXd& params() const noexcept { return params_; }

    [[nodiscard]] MatrixXd matrix() const {
        switch (mode_) {
            case ShapeMode::Isotropic: return params_(0) * MatrixXd::Identity(dim_, dim_);
            case ShapeMode::Diagonal: return params_.asDiagonal();
            case ShapeMode::Full: {
                MatrixXd s(dim_, dim_);
                for (Index a = 0; a < dim_; ++a)
                    for (Index b = 0; b < dim_; ++b) s(a, b) = params_(a * dim_ + b);
                return s;
            }
        }
        return {};
    }

    [[nodiscard]] MatrixXd theta() const {
        const MatrixXd s = matrix();
        MatrixXd t = s.transpose() * s;
        return 0.5 * (t + t.transpose());
    }

    /// Sigma * x, summed in a fixed order so every caller sees identical bits.
    void apply(const double* x, double* out) const {
        switch (mode_) {
            case ShapeMode::Isotropic:
                for (Index a = 0; a < dim_; ++a) out[a] = params_(0) * x[a];
                break;
            case ShapeMode::Diagonal:
                for (Index a = 0; a < dim_; ++a) out[a] = params_(a) * x[a];
                break;
            case ShapeMode::Full:
                for (Index a = 0; a < dim_; ++a) {
                    double acc = 0.0;
                    const double* row = params_.data() + a * dim_;
                    for (Index b = 0; b < dim_; ++b) acc += row[b] * x[b];
                    out[a] = acc;
                }
                break;
        }
    }

    [[nodiscard]] VectorXd apply(const Eigen::Ref<const VectorXd>& x) const {
        check_dim(x.size());
        VectorXd xc = x;
        VectorXd out(dim_);
        apply(xc.data(), out.data());
        return out;
    }

    /// Maps every row x_i of X to Sigma x_i.
    [[nodiscard]] MatrixXd apply_rows(const Eigen::Ref<const MatrixXd>& X) const {
        check_dim(X.cols());
        using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        const RowMajor in = X;
        RowMajor out(X.rows(), dim_);
        for (Index i = 0; i < X.rows(); ++i) apply(in.row(i).data(), out.row(i).data());
        return out;
    }

    [[nodiscard]] ShapeMatrix scaled(double c) const { return ShapeMatrix(mode_, dim_, c * params_); }

    [[nodiscard]] bool all_finite() const { return params_.allFinite(); }

    void check_dim(Index d) const {
        if (d != dim_)
            throw ArgumentError("dimension mismatch: sigma is " + std::to_string(dim_) + "-dimensional, input has " +
                                std::to_string(d) + " columns");
    }

private:
    ShapeMatrix(ShapeMode mode, Index dim, VectorXd params) : mode_(mode), dim_(dim), params_(std::move(params)) {}

    ShapeMode mode_;
    Index dim_;
    VectorXd params_;
};

namespace detail {

inline double squared_distance(const double* a, const double* b, Index d) {
    double q = 0.0;
    for (Index k = 0; k < d; ++k) {
        const double t = a[k] - b[k];
        q += t * t;
    }
    return q;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace detail

/// Quadratic form (x - z)^T Theta (x - z), computed as |Sigma x - Sigma z|^2.
inline double quad_form(const ShapeMatrix& sigma, const Eigen::Ref<const VectorXd>& x,
                        const Eigen::Ref<const VectorXd>& z) {
    sigma.check_dim(x.size());
    sigma.check_dim(z.size());
    const VectorXd sx = sigma.apply(x);
    const VectorXd sz = sigma.apply(z);
    return detail::squared_distance(sx.data(), sz.data(), sigma.dim());
}

inline double eval_kernel(RbfFamily family, const ShapeMatrix& sigma, const Eigen::Ref<const VectorXd>& x,
                          const Eigen::Ref<const VectorXd>& z) {
    return phi_q(family, quad_form(sigma, x, z));
}

/// Pairwise quadratic forms q_ij between the rows of X.
inline MatrixXd quad_form_matrix(const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& X) {
    const detail::RowMatrix Y = sigma.apply_rows(X);
    const Index n = X.rows();
    const Index d = sigma.dim();
    MatrixXd Q = MatrixXd::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        for (Index i = j + 1; i < n; ++i) {
            const double q = detail::squared_distance(Y.row(i).data(), Y.row(j).data(), d);
            Q(i, j) = q;
            Q(j, i) = q;
        }
    }
    return Q;
}

/// Quadratic forms between every row of A (m) and every row of B (n), m x n.
inline MatrixXd quad_form_cross(const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& A,
                                const Eigen::Ref<const MatrixXd>& B) {
    const detail::RowMatrix YA = sigma.apply_rows(A);
    const detail::RowMatrix YB = sigma.apply_rows(B);
    const Index d = sigma.dim();
    MatrixXd Q(A.rows(), B.rows());
    for (Index j = 0; j < B.rows(); ++j)
        for (Index i = 0; i < A.rows(); ++i)
            Q(i, j) = detail::squared_distance(YA.row(i).data(), YB.row(j).data(), d);
    return Q;
}

inline MatrixXd apply_phi(RbfFamily family, const MatrixXd& Q) {
    return Q.unaryExpr([family](double q) { return phi_q(family, q); });
}

/// Symmetric kernel matrix K_ij = kappa_Sigma(x_i, x_j) with unit diagonal.
inline MatrixXd kernel_matrix(RbfFamily family, const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& X) {
    return apply_phi(family, quad_form_matrix(sigma, X));
}

/// m x n matrix kappa_Sigma(q_i, x_j) of query rows against center rows.
inline MatrixXd kernel_cross(RbfFamily family, const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& Q,
                             const Eigen::Ref<const MatrixXd>& X) {
    return apply_phi(family, quad_form_cross(sigma, Q, X));
}

/// dK/dSigma for every free entry of sigma, as dense n x n matrices.
///
/// Memory is O(n^2 * params); intended for small problems and for checking
/// the contracted form in contract_quad_form_grad.
inline std::vector<MatrixXd> kernel_matrix_grad_sigma(RbfFamily family, const ShapeMatrix& sigma,
                                                      const Eigen::Ref<const MatrixXd>& X) {
    sigma.check_dim(X.cols());
    const Index n = X.rows();
    const Index d = sigma.dim();
    const Index np = sigma.params().size();
    const MatrixXd S = sigma.matrix();
    const MatrixXd Q = quad_form_matrix(sigma, X);
    std::vector<MatrixXd> grads(static_cast<std::size_t>(np), MatrixXd::Zero(n, n));
    VectorXd delta(d), sdelta(d);
    for (Index j = 0; j < n; ++j) {
        for (Index i = j + 1; i < n; ++i) {
            delta = X.row(i).transpose() - X.row(j).transpose();
            sdelta = S * delta;
            const double dphi = phi_dq(family, Q(i, j));
            auto put = [&](Index p, double dq) {
                grads[static_cast<std::size_t>(p)](i, j) = dphi * dq;
                grads[static_cast<std::size_t>(p)](j, i) = dphi * dq;
            };
            switch (sigma.mode()) {
                case ShapeMode::Isotropic: put(0, 2.0 * sigma.params()(0) * delta.squaredNorm()); break;
                case ShapeMode::Diagonal:
                    for (Index a = 0; a < d; ++a) put(a, 2.0 * sdelta(a) * delta(a));
                    break;
                case ShapeMode::Full:
                    for (Index a = 0; a < d; ++a)
                        for (Index b = 0; b < d; ++b) put(a * d + b, 2.0 * sdelta(a) * delta(b));
                    break;
            }
        }
    }
    return grads;
}

/// Gradient of sum_ij W_ij q_ij(Sigma) with respect to the free entries of
/// sigma, for a symmetric weight matrix W.
///
/// Uses sum_ij W_ij d_ij d_ij^T = 2 X^T (diag(W 1) - W) X with d_ij = x_i - x_j,
/// so the cost is O(n^2 d) instead of one n x n matrix per entry.
inline VectorXd contract_quad_form_grad(const ShapeMatrix& sigma, const Eigen::Ref<const MatrixXd>& X,
                                        const MatrixXd& W) {
    sigma.check_dim(X.cols());
    const Index d = sigma.dim();
    // Centering leaves every difference x_i - x_j unchanged and limits cancellation.
    const MatrixXd Xc = X.rowwise() - X.colwise().mean();
    const VectorXd row_sums = W.rowwise().sum();
    MatrixXd D = Xc.transpose() * row_sums.asDiagonal() * Xc - Xc.transpose() * W * Xc;
    D = (D + D.transpose()).eval();  // = 2 X^T (diag(W1) - W) X, symmetrized
    const MatrixXd G = 2.0 * sigma.matrix() * D;
    VectorXd out(sigma.params().size());
    switch (sigma.mode()) {
        case ShapeMode::Isotropic: out(0) = G.trace(); break;
        case ShapeMode::Diagonal: out = G.diagonal(); break;
        case ShapeMode::Full:
            for (Index a = 0; a < d; ++a)
                for (Index b = 0; b < d; ++b) out(a * d + b) = G(a, b);
            break;
    }
    return out;
}

}  // namespace fuse
