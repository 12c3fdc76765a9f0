#include <cmath>

#include <gtest/gtest.h>

#include "fuse/numerics.hpp"
#include "test_util.hpp"

using namespace fuse;

TEST(SolveSpd, Identity) {
    const VectorXd b = (VectorXd(3) << 1, 2, 3).finished();
    const auto sol = solve_spd(MatrixXd::Identity(3, 3), b, 0.0);
    EXPECT_EQ(sol.jitter, 0.0);
    EXPECT_TRUE(sol.x.isApprox(b));
}

TEST(SolveSpd, Diagonal) {
    const MatrixXd A = (MatrixXd(2, 2) << 2, 0, 0, 4).finished();
    const auto sol = solve_spd(A, (VectorXd(2) << 2, 8).finished(), 0.0);
    EXPECT_NEAR(sol.x(0), 1.0, 1e-15);
    EXPECT_NEAR(sol.x(1), 2.0, 1e-15);
}

TEST(SolveSpd, RandomResidual) {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const MatrixXd A = fuse::testing::random_spd(rng, 10);
        const VectorXd b = fuse::testing::random_vector(rng, 10);
        const auto sol = solve_spd(A, b, 0.0);
        EXPECT_EQ(sol.jitter, 0.0);
        EXPECT_LT((A * sol.x - b).norm() / b.norm(), 1e-8);
    }
}

TEST(SolveSpd, JitterEscalatesOnSingular) {
    // Rank one: needs a shift to factor.
    const VectorXd v = (VectorXd(3) << 1, 1, 1).finished();
    const MatrixXd A = v * v.transpose();
    const auto sol = solve_spd(A, v, 1e-12);
    EXPECT_GT(sol.jitter, 0.0);
    EXPECT_LE(sol.jitter, kMaxJitter);
    EXPECT_LT(((A + sol.jitter * MatrixXd::Identity(3, 3)) * sol.x - v).norm(), 1e-8);
}

TEST(SolveSpd, FailsWithFinalJitter) {
    const MatrixXd A = -MatrixXd::Identity(2, 2);
    try {
        (void)solve_spd(A, VectorXd::Ones(2), 1e-12);
        FAIL() << "expected SingularSystemError";
    } catch (const SingularSystemError& e) {
        EXPECT_DOUBLE_EQ(e.final_jitter(), kMaxJitter);
    }
}

TEST(InverseDiag, Examples) {
    const MatrixXd A = (MatrixXd(2, 2) << 2, 0, 0, 4).finished();
    const auto d = inverse_diag(A, 0.0);
    EXPECT_NEAR(d.values(0), 0.5, 1e-15);
    EXPECT_NEAR(d.values(1), 0.25, 1e-15);
    EXPECT_TRUE(inverse_diag(MatrixXd::Identity(5, 5), 0.0).values.isApprox(VectorXd::Ones(5)));
}

TEST(InverseDiag, MatchesFullInverse) {
    Rng rng(22);
    const MatrixXd A = fuse::testing::random_spd(rng, 8);
    const VectorXd want = A.inverse().diagonal();
    const auto got = inverse_diag(A, 0.0);
    EXPECT_LT((got.values - want).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_GT(got.values.minCoeff(), 0.0);
}

TEST(SpdFactorTest, InverseMatches) {
    Rng rng(23);
    const MatrixXd A = fuse::testing::random_spd(rng, 9);
    const SpdFactor f(A, 0.0);
    EXPECT_LT((f.inverse() - A.inverse()).cwiseAbs().maxCoeff(), 1e-12);
    const VectorXd b = fuse::testing::random_vector(rng, 9);
    EXPECT_NEAR(f.half_solve(b).squaredNorm(), b.dot(A.inverse() * b), 1e-12);
}

TEST(EighSorted, DiagonalInput) {
    const MatrixXd A = VectorXd((VectorXd(3) << 3, 1, 2).finished()).asDiagonal();
    const auto spec = eigh_sorted(A);
    EXPECT_NEAR(spec.values(0), 3, 1e-14);
    EXPECT_NEAR(spec.values(1), 2, 1e-14);
    EXPECT_NEAR(spec.values(2), 1, 1e-14);
    // Permutation matrix with positive entries after the sign convention.
    EXPECT_NEAR(spec.vectors(0, 0), 1.0, 1e-14);
    EXPECT_NEAR(spec.vectors(2, 1), 1.0, 1e-14);
    EXPECT_NEAR(spec.vectors(1, 2), 1.0, 1e-14);
}

TEST(EighSorted, Classic2x2) {
    const MatrixXd A = (MatrixXd(2, 2) << 2, 1, 1, 2).finished();
    const auto spec = eigh_sorted(A);
    EXPECT_NEAR(spec.values(0), 3.0, 1e-14);
    EXPECT_NEAR(spec.values(1), 1.0, 1e-14);
    const double s = 1.0 / std::sqrt(2.0);
    EXPECT_NEAR(std::abs(spec.vectors(0, 0)), s, 1e-14);
    EXPECT_NEAR(spec.vectors(0, 0) * spec.vectors(1, 0), 0.5, 1e-14);
    EXPECT_NEAR(spec.vectors(0, 1) * spec.vectors(1, 1), -0.5, 1e-14);
}

TEST(EighSorted, ReconstructionAndOrthonormality) {
    Rng rng(24);
    for (int trial = 0; trial < 10; ++trial) {
        MatrixXd B = fuse::testing::random_matrix(rng, 12, 12, -3.0, 3.0);
        const MatrixXd A = B + B.transpose();
        const auto spec = eigh_sorted(A);
        const MatrixXd& V = spec.vectors;
        EXPECT_LT((V.transpose() * V - MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-10);
        const MatrixXd R = V * spec.values.asDiagonal() * V.transpose();
        EXPECT_LT((R - A).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, max_abs(A)));
        for (Index k = 1; k < 12; ++k) EXPECT_GE(spec.values(k - 1), spec.values(k));
        for (Index k = 0; k < 12; ++k) {
            Index arg;
            V.col(k).cwiseAbs().maxCoeff(&arg);
            EXPECT_GT(V(arg, k), 0.0);
        }
    }
}

TEST(EighSorted, GramMatrixNonnegative) {
    Rng rng(25);
    for (int trial = 0; trial < 20; ++trial) {
        const Index d = 1 + static_cast<Index>(rng.below(10));
        const MatrixXd S = fuse::testing::random_matrix(rng, d, d, -5.0, 5.0);
        EXPECT_GE(eigh_sorted(S.transpose() * S).values.minCoeff(), -1e-10 * std::max(1.0, (S.transpose() * S).norm()));
    }
}

TEST(EighSorted, RejectsNonSymmetric) {
    const MatrixXd A = (MatrixXd(2, 2) << 1, 2, 0, 1).finished();
    EXPECT_THROW(eigh_sorted(A), ArgumentError);
}
