#include <cmath>

#include <gtest/gtest.h>

#include "fuse/kernels.hpp"
#include "fuse/numerics.hpp"
#include "test_util.hpp"

using namespace fuse;
using fuse::testing::random_matrix;
using fuse::testing::random_sigma;

TEST(Phi, ClosedForms) {
    EXPECT_DOUBLE_EQ(phi(RbfFamily::GA, 0.0), 1.0);
    EXPECT_NEAR(phi(RbfFamily::M0, 1.0), 0.367879441, 1e-9);
    EXPECT_NEAR(phi(RbfFamily::M2, 1.0), 0.735758882, 1e-9);
    for (auto fam : kAllFamilies) EXPECT_DOUBLE_EQ(phi(fam, 0.0), 1.0);
}

TEST(Phi, NegativeRadiusThrows) {
    EXPECT_THROW(phi(RbfFamily::GA, -1e-3), ArgumentError);
}

TEST(Phi, StrictlyDecreasing) {
    for (auto fam : kAllFamilies) {
        double prev = phi(fam, 0.0);
        for (double r = 0.05; r < 8.0; r += 0.05) {
            const double v = phi(fam, r);
            EXPECT_LT(v, prev) << to_string(fam) << " r=" << r;
            EXPECT_GT(v, 0.0);
            prev = v;
        }
    }
}

TEST(PhiDq, ClosedForms) {
    EXPECT_DOUBLE_EQ(phi_dq(RbfFamily::GA, 0.0), -1.0);
    EXPECT_NEAR(phi_dq(RbfFamily::M2, 1.0), -0.183939721, 1e-9);
    EXPECT_NEAR(phi_dq(RbfFamily::M0, 4.0), -0.033833820, 1e-9);
    EXPECT_TRUE(std::isfinite(phi_dq(RbfFamily::M0, 0.0)));
}

TEST(PhiDq, MatchesFiniteDifference) {
    for (auto fam : kAllFamilies) {
        for (double q : {0.05, 0.3, 1.0, 2.5}) {
            const double h = 1e-6;
            const double fd = (phi(fam, std::sqrt(q + h)) - phi(fam, std::sqrt(q - h))) / (2 * h);
            EXPECT_NEAR(phi_dq(fam, q), fd, 1e-7) << to_string(fam) << " q=" << q;
        }
    }
}

TEST(EvalKernel, Examples) {
    const VectorXd x = (VectorXd(2) << 0.3, 0.7).finished();
    EXPECT_DOUBLE_EQ(eval_kernel(RbfFamily::GA, ShapeMatrix::full(MatrixXd::Identity(2, 2)), x, x), 1.0);

    const VectorXd o = VectorXd::Zero(2);
    const VectorXd e1 = (VectorXd(2) << 1.0, 0.0).finished();
    EXPECT_NEAR(eval_kernel(RbfFamily::GA, ShapeMatrix::isotropic(2.0, 2), o, e1), 0.018315639, 1e-9);

    MatrixXd S(2, 2);
    S << 1, 1, 0, 1;
    EXPECT_NEAR(eval_kernel(RbfFamily::M0, ShapeMatrix::full(S), o, e1), std::exp(-1.0), 1e-15);
}

TEST(EvalKernel, DimensionMismatchThrows) {
    EXPECT_THROW(eval_kernel(RbfFamily::GA, ShapeMatrix::isotropic(1.0, 3), VectorXd::Zero(2), VectorXd::Zero(2)),
                 ArgumentError);
}

TEST(EvalKernel, SymmetricAndModesAgree) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Index d = 1 + static_cast<Index>(rng.below(5));
        const VectorXd x = fuse::testing::random_vector(rng, d);
        const VectorXd z = fuse::testing::random_vector(rng, d);
        const double eps = 0.2 + rng.uniform();
        const auto iso = ShapeMatrix::isotropic(eps, d);
        const auto diag = ShapeMatrix::diagonal(VectorXd::Constant(d, eps));
        const auto full = ShapeMatrix::full(eps * MatrixXd::Identity(d, d));
        for (auto fam : kAllFamilies) {
            EXPECT_EQ(eval_kernel(fam, iso, x, z), eval_kernel(fam, iso, z, x));
            EXPECT_NEAR(eval_kernel(fam, iso, x, z), eval_kernel(fam, diag, x, z), 1e-15);
            EXPECT_NEAR(eval_kernel(fam, iso, x, z), eval_kernel(fam, full, x, z), 1e-15);
        }
    }
}

TEST(EvalKernel, MappedEquivalence) {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const Index d = 1 + static_cast<Index>(rng.below(6));
        const auto sigma = random_sigma(rng, ShapeMode::Full, d);
        const VectorXd x = fuse::testing::random_vector(rng, d);
        const VectorXd z = fuse::testing::random_vector(rng, d);
        const auto unit = ShapeMatrix::full(MatrixXd::Identity(d, d));
        const MatrixXd S = sigma.matrix();
        for (auto fam : kAllFamilies)
            EXPECT_NEAR(eval_kernel(fam, sigma, x, z), eval_kernel(fam, unit, S * x, S * z), 1e-12);
    }
}

TEST(ShapeMatrixTest, ThetaIsPsd) {
    Rng rng(13);
    for (auto mode : {ShapeMode::Isotropic, ShapeMode::Diagonal, ShapeMode::Full}) {
        for (int trial = 0; trial < 20; ++trial) {
            const Index d = 1 + static_cast<Index>(rng.below(8));
            const auto sigma = random_sigma(rng, mode, d, -2.0, 2.0);
            const auto spec = eigh_sorted(sigma.theta());
            EXPECT_GE(spec.values.minCoeff(), -1e-12 * std::max(1.0, spec.values.maxCoeff()));
        }
    }
}

TEST(KernelMatrix, SmallCases) {
    const MatrixXd one = MatrixXd::Constant(1, 3, 0.4);
    const MatrixXd K1 = kernel_matrix(RbfFamily::M2, ShapeMatrix::isotropic(1.0, 3), one);
    ASSERT_EQ(K1.rows(), 1);
    EXPECT_EQ(K1(0, 0), 1.0);

    const MatrixXd X = (MatrixXd(2, 1) << 0.0, 1.0).finished();
    const MatrixXd K = kernel_matrix(RbfFamily::GA, ShapeMatrix::isotropic(1.0, 1), X);
    EXPECT_EQ(K(0, 0), 1.0);
    EXPECT_EQ(K(1, 1), 1.0);
    EXPECT_NEAR(K(0, 1), std::exp(-1.0), 1e-15);
    EXPECT_EQ(K(0, 1), K(1, 0));
}

TEST(KernelMatrix, BitExactAgainstLoop) {
    Rng rng(14);
    const MatrixXd X = random_matrix(rng, 8, 3);
    for (auto mode : {ShapeMode::Isotropic, ShapeMode::Diagonal, ShapeMode::Full}) {
        const auto sigma = random_sigma(rng, mode, 3);
        for (auto fam : kAllFamilies) {
            const MatrixXd K = kernel_matrix(fam, sigma, X);
            const MatrixXd L = fuse::testing::loop_kernel_matrix(fam, sigma, X);
            EXPECT_EQ((K - L).cwiseAbs().maxCoeff(), 0.0) << to_string(fam) << " " << to_string(mode);
        }
    }
}

TEST(KernelMatrix, PsdSmoke) {
    Rng rng(15);
    for (int trial = 0; trial < 10; ++trial) {
        const Index n = 2 + static_cast<Index>(rng.below(19));
        const Index d = 1 + static_cast<Index>(rng.below(4));
        const MatrixXd X = random_matrix(rng, n, d);
        const auto sigma = random_sigma(rng, ShapeMode::Full, d);
        for (auto fam : kAllFamilies) {
            const auto spec = eigh_sorted(kernel_matrix(fam, sigma, X));
            EXPECT_GE(spec.values.minCoeff(), -1e-10);
        }
    }
}

TEST(KernelGrad, SinglePointIsZero) {
    const MatrixXd X = MatrixXd::Constant(1, 2, 0.5);
    const auto grads = kernel_matrix_grad_sigma(RbfFamily::GA, ShapeMatrix::full(MatrixXd::Identity(2, 2)), X);
    ASSERT_EQ(grads.size(), 4u);
    for (const auto& g : grads) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(KernelGrad, IsotropicTwoPoints) {
    const MatrixXd X = (MatrixXd(2, 1) << 0.0, 1.0).finished();
    const auto grads = kernel_matrix_grad_sigma(RbfFamily::GA, ShapeMatrix::isotropic(1.0, 1), X);
    ASSERT_EQ(grads.size(), 1u);
    EXPECT_NEAR(grads[0](0, 1), -2.0 * std::exp(-1.0), 1e-15);
    EXPECT_EQ(grads[0](0, 0), 0.0);
}

TEST(KernelGrad, MatchesFiniteDifferences) {
    Rng rng(16);
    const MatrixXd X = random_matrix(rng, 6, 4);
    for (auto mode : {ShapeMode::Diagonal, ShapeMode::Full}) {
        const auto sigma = random_sigma(rng, mode, 4);
        for (auto fam : kAllFamilies) {
            const auto grads = kernel_matrix_grad_sigma(fam, sigma, X);
            const double h = 1e-6;
            for (Index k = 0; k < sigma.params().size(); ++k) {
                VectorXd plus = sigma.params(), minus = sigma.params();
                plus(k) += h;
                minus(k) -= h;
                const MatrixXd fd = (kernel_matrix(fam, ShapeMatrix::from_params(mode, 4, plus), X) -
                                     kernel_matrix(fam, ShapeMatrix::from_params(mode, 4, minus), X)) /
                                    (2 * h);
                const MatrixXd& g = grads[static_cast<std::size_t>(k)];
                for (Index i = 0; i < 6; ++i)
                    for (Index j = 0; j < 6; ++j) {
                        const double err = std::abs(g(i, j) - fd(i, j)) / std::max(std::abs(fd(i, j)), 1e-4);
                        EXPECT_LT(err, 1e-5) << to_string(fam) << " " << to_string(mode) << " k=" << k;
                    }
            }
        }
    }
}

TEST(KernelGrad, ContractedFormMatchesExplicit) {
    Rng rng(17);
    const MatrixXd X = random_matrix(rng, 7, 3);
    MatrixXd W = random_matrix(rng, 7, 7, -1.0, 1.0);
    W = (W + W.transpose()).eval();
    W.diagonal().setZero();
    for (auto mode : {ShapeMode::Isotropic, ShapeMode::Diagonal, ShapeMode::Full}) {
        const auto sigma = random_sigma(rng, mode, 3);
        // Weighting by 1/phi_dq turns dK/dSigma back into dq/dSigma.
        const MatrixXd Q = quad_form_matrix(sigma, X);
        const auto grads = kernel_matrix_grad_sigma(RbfFamily::GA, sigma, X);
        MatrixXd Wk = W;
        for (Index i = 0; i < 7; ++i)
            for (Index j = 0; j < 7; ++j) Wk(i, j) = (i == j) ? 0.0 : W(i, j) * phi_dq(RbfFamily::GA, Q(i, j));
        const VectorXd contracted = contract_quad_form_grad(sigma, X, Wk);
        for (Index k = 0; k < contracted.size(); ++k) {
            const double explicit_sum = (W.array() * grads[static_cast<std::size_t>(k)].array()).sum();
            EXPECT_NEAR(contracted(k), explicit_sum, 1e-11 * std::max(1.0, std::abs(explicit_sum)));
        }
    }
}
