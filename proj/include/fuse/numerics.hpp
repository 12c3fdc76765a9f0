#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "fuse/errors.hpp"

namespace fuse {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kDefaultJitter = 1e-12;
inline constexpr double kMaxJitter = 1e-2;

/// Cholesky factorization of A + jitter * I, where jitter is the first value
/// of start, 10 start, 100 start, ... (capped at 1e-2) that factors.
/// A start of 0 tries the unshifted matrix first, then continues from 1e-12.
class SpdFactor {
public:
    SpdFactor(const MatrixXd& A, double jitter_start = kDefaultJitter) {
        if (A.rows() != A.cols()) throw ArgumentError("SpdFactor: matrix must be square");
        if (!(jitter_start >= 0.0)) throw ArgumentError("SpdFactor: jitter_start must be nonnegative");
        double eta = jitter_start;
        MatrixXd shifted = A;
        while (true) {
            if (eta > 0.0) shifted.diagonal() = A.diagonal().array() + eta;
            llt_.compute(shifted);
            if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().allFinite() &&
                (llt_.matrixLLT().diagonal().array() > 0.0).all()) {
                jitter_ = eta;
                return;
            }
            if (eta >= kMaxJitter) {
                std::ostringstream msg;
                msg << "kernel system is singular: Cholesky failed with jitter " << eta;
                throw SingularSystemError(msg.str(), eta);
            }
            eta = (eta == 0.0) ? kDefaultJitter : std::min(eta * 10.0, kMaxJitter);
        }
    }

    [[nodiscard]] double jitter() const noexcept { return jitter_; }
    [[nodiscard]] Index size() const noexcept { return llt_.rows(); }

    [[nodiscard]] VectorXd solve(const Eigen::Ref<const VectorXd>& b) const { return llt_.solve(b); }
    [[nodiscard]] MatrixXd solve(const Eigen::Ref<const MatrixXd>& B) const { return llt_.solve(B); }

    /// L^{-1} b; |L^{-1} b|^2 = b^T (A + jitter I)^{-1} b.
    [[nodiscard]] VectorXd half_solve(const Eigen::Ref<const VectorXd>& b) const {
        return llt_.matrixL().solve(b);
    }

    /// L^{-1}, so that (A + jitter I)^{-1} = L^{-T} L^{-1}.
    [[nodiscard]] MatrixXd inverse_factor() const {
        MatrixXd linv = MatrixXd::Identity(size(), size());
        llt_.matrixL().solveInPlace(linv);
        return linv;
    }

    [[nodiscard]] MatrixXd inverse() const {
        const MatrixXd linv = inverse_factor();
        MatrixXd inv = MatrixXd::Zero(size(), size());
        inv.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose());
        inv.triangularView<Eigen::StrictlyUpper>() = inv.transpose();
        return inv;
    }

    [[nodiscard]] VectorXd inverse_diagonal() const { return inverse_factor().colwise().squaredNorm().transpose(); }

private:
    Eigen::LLT<MatrixXd> llt_;
    double jitter_ = 0.0;
};

struct SpdSolution {
    VectorXd x;
    double jitter = 0.0;
};

/// Solves (A + eta I) x = b with eta chosen by jitter escalation.
inline SpdSolution solve_spd(const MatrixXd& A, const Eigen::Ref<const VectorXd>& b,
                             double jitter_start = kDefaultJitter) {
    if (b.size() != A.rows()) throw ArgumentError("solve_spd: right-hand side has wrong length");
    const SpdFactor factor(A, jitter_start);
    return {factor.solve(b), factor.jitter()};
}

struct InverseDiagonal {
    VectorXd values;
    double jitter = 0.0;
};

/// diag((A + eta I)^{-1}) with the same jitter escalation as solve_spd.
inline InverseDiagonal inverse_diag(const MatrixXd& A, double jitter_start = kDefaultJitter) {
    const SpdFactor factor(A, jitter_start);
    return {factor.inverse_diagonal(), factor.jitter()};
}

/// Eigenpairs of a symmetric matrix, values sorted descending.
/// Column j of vectors pairs with values(j).
struct EigenSpectrum {
    VectorXd values;
    MatrixXd vectors;

    [[nodiscard]] Index size() const noexcept { return values.size(); }
};

inline double max_abs(const MatrixXd& A) { return A.size() == 0 ? 0.0 : A.cwiseAbs().maxCoeff(); }

inline void check_symmetric(const MatrixXd& A, double tol = 1e-10) {
    if (A.rows() != A.cols()) throw ArgumentError("matrix must be square");
    const double scale = std::max(1.0, max_abs(A));
    if (max_abs(A - A.transpose()) > tol * scale) throw ArgumentError("matrix is not symmetric");
}

/// Symmetric eigendecomposition, sorted by descending eigenvalue.
///
/// Ties keep the solver's order. Each eigenvector is oriented so that its
/// largest-magnitude entry is positive (first such entry on exact ties).
inline EigenSpectrum eigh_sorted(const MatrixXd& A) {
    check_symmetric(A);
    const MatrixXd sym = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) throw ArgumentError("eigh_sorted: eigensolver did not converge");

    const Index d = A.rows();
    std::vector<Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Index{0});
    const VectorXd& raw = solver.eigenvalues();
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return raw(a) > raw(b); });

    EigenSpectrum out{VectorXd(d), MatrixXd(d, d)};
    for (Index k = 0; k < d; ++k) {
        const Index src = order[static_cast<std::size_t>(k)];
        out.values(k) = raw(src);
        VectorXd v = solver.eigenvectors().col(src);
        Index arg = 0;
        for (Index i = 1; i < d; ++i)
            if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
        if (v(arg) < 0.0) v = -v;
        out.vectors.col(k) = v;
    }
    return out;
}

}  // namespace fuse
