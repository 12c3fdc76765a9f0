#include <cmath>

#include <gtest/gtest.h>

#include "fuse/fuse.hpp"
#include "fuse/regressor.hpp"
#include "test_util.hpp"

using namespace fuse;
using fuse::testing::random_matrix;
using fuse::testing::random_sigma;
using fuse::testing::random_vector;

TEST(DecomposeTheta, Isotropic) {
    const auto spec = decompose_theta(ShapeMatrix::isotropic(2.0, 3));
    for (Index k = 0; k < 3; ++k) EXPECT_EQ(spec.values(k), 4.0);
    EXPECT_TRUE((spec.vectors.transpose() * spec.vectors).isIdentity(1e-15));
}

TEST(DecomposeTheta, DiagonalPermutation) {
    const auto spec = decompose_theta(ShapeMatrix::diagonal((VectorXd(3) << 3, 1, 2).finished()));
    EXPECT_EQ(spec.values, (VectorXd(3) << 9, 4, 1).finished());
    EXPECT_EQ(spec.vectors(0, 0), 1.0);
    EXPECT_EQ(spec.vectors(2, 1), 1.0);
    EXPECT_EQ(spec.vectors(1, 2), 1.0);
}

TEST(DecomposeTheta, FullReconstruction) {
    Rng rng(51);
    const auto sigma = random_sigma(rng, ShapeMode::Full, 6);
    const auto spec = decompose_theta(sigma);
    const MatrixXd R = spec.vectors * spec.values.asDiagonal() * spec.vectors.transpose();
    EXPECT_LT((R - sigma.theta()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GE(clamped_values(spec).minCoeff(), kMachineEpsilon);
}

TEST(MakePlan, Rules) {
    const auto equal = decompose_theta(ShapeMatrix::isotropic(1.5, 4));
    EXPECT_EQ(make_plan(equal, RelativeThreshold{0.5}).p, 4);

    EigenSpectrum gap{(VectorXd(4) << 7.6596, 6.3804e-3, 1e-4, 1e-6).finished(), MatrixXd::Identity(4, 4)};
    EXPECT_EQ(make_plan(gap, RelativeThreshold{1e-2}).p, 1);

    VectorXd diag(8);
    diag << 0.80, 0.78, 0.76, 0.75, 0.73, 0.72, 1.8452e-3, 1e-4;
    EigenSpectrum f1{diag, MatrixXd::Identity(8, 8)};
    EXPECT_EQ(make_plan(f1, AbsoluteThreshold{1e-2}).p, 6);

    EXPECT_EQ(make_plan(gap, AbsoluteThreshold{100.0}).p, 1);
    EXPECT_EQ(make_plan(gap, FixedCount{3}).p, 3);
    EXPECT_THROW(make_plan(gap, FixedCount{5}), ArgumentError);
    EXPECT_THROW(make_plan(gap, FixedCount{0}), ArgumentError);
}

TEST(MakePlan, RowNormsAndMappedPoint) {
    Rng rng(52);
    const auto sigma = random_sigma(rng, ShapeMode::Full, 5);
    const auto plan = make_plan(decompose_theta(sigma), FixedCount{3});
    ASSERT_EQ(plan.map.rows(), 3);
    for (Index k = 0; k < 3; ++k) EXPECT_NEAR(plan.map.row(k).norm(), std::sqrt(plan.spectrum.values(k)), 1e-10);
    const VectorXd x = random_vector(rng, 5);
    const VectorXd mx = plan.map * x;
    for (Index k = 0; k < 3; ++k) {
        double direct = 0.0;
        for (Index j = 0; j < 5; ++j) direct += plan.spectrum.vectors(j, k) * x(j);
        EXPECT_NEAR(mx(k), std::sqrt(plan.spectrum.values(k)) * direct, 1e-12);
    }
}

TEST(ParseRule, RoundTrip) {
    for (const ReductionRule& r : {ReductionRule{AbsoluteThreshold{0.01}}, ReductionRule{RelativeThreshold{1e-4}},
                                    ReductionRule{FixedCount{3}}})
        EXPECT_EQ(to_string(parse_rule(to_string(r))), to_string(r));
    EXPECT_THROW(parse_rule("bogus"), ArgumentError);
    EXPECT_THROW(parse_rule("median:3"), ArgumentError);
    EXPECT_THROW(parse_rule("count:x"), ArgumentError);
}

TEST(MapDataset, IdentityAndDiagonal) {
    Rng rng(53);
    const MatrixXd X = random_matrix(rng, 10, 3);
    const auto id = make_plan(decompose_theta(ShapeMatrix::isotropic(1.0, 3)), FixedCount{3});
    EXPECT_EQ(map_dataset(id, X), X);

    const auto diag = make_plan(decompose_theta(ShapeMatrix::diagonal((VectorXd(3) << 1, 3, 2).finished())),
                                FixedCount{3});
    const MatrixXd Y = map_dataset(diag, X);
    EXPECT_TRUE(Y.col(0).isApprox(3.0 * X.col(1)));
    EXPECT_TRUE(Y.col(1).isApprox(2.0 * X.col(2)));
    EXPECT_TRUE(Y.col(2).isApprox(X.col(0)));
    EXPECT_THROW(map_dataset(diag, MatrixXd::Zero(2, 4)), ArgumentError);
}

TEST(MapDataset, FullRankReproducesShapedFit) {
    Rng rng(54);
    for (int trial = 0; trial < 5; ++trial) {
        const auto sigma = random_sigma(rng, ShapeMode::Full, 4);
        const MatrixXd X = random_matrix(rng, 50, 4);
        const VectorXd f = random_vector(rng, 50);
        const auto plan = make_plan(decompose_theta(sigma), FixedCount{4});
        const MatrixXd Q = random_matrix(rng, 100, 4);
        const auto shaped = fit(RbfFamily::M2, sigma, X, f, 0.0, 0.0);
        const auto mapped = fit(RbfFamily::M2, ShapeMatrix::isotropic(1.0, 4), map_dataset(plan, X), f, 0.0, 0.0);
        EXPECT_LT((predict(shaped, Q) - predict(mapped, map_dataset(plan, Q))).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(ReducedTheta, Examples) {
    Rng rng(55);
    const auto sigma = random_sigma(rng, ShapeMode::Full, 5);
    const auto spec = decompose_theta(sigma);
    EXPECT_LT((reduced_theta(make_plan(spec, FixedCount{5})) - sigma.theta()).cwiseAbs().maxCoeff(), 1e-10);
    const VectorXd v = spec.vectors.col(0);
    EXPECT_LT((reduced_theta(make_plan(spec, FixedCount{1})) - spec.values(0) * v * v.transpose()).cwiseAbs().maxCoeff(),
              1e-12);
    for (Index p = 1; p <= 5; ++p) {
        const auto plan = make_plan(spec, FixedCount{p});
        const MatrixXd T = reduced_theta(plan);
        for (int t = 0; t < 10; ++t) {
            const VectorXd dlt = random_vector(rng, 5);
            EXPECT_NEAR(dlt.dot(T * dlt), (plan.map * dlt).squaredNorm(), 1e-10);
        }
    }
}

TEST(Reduction, EquivalenceOfTwoPaths) {
    Rng rng(56);
    for (Index p = 1; p <= 4; ++p) {
        const auto sigma = random_sigma(rng, ShapeMode::Full, 4);
        const auto plan = make_plan(decompose_theta(sigma), FixedCount{p});
        const MatrixXd X = random_matrix(rng, 40, 4);
        const VectorXd f = random_vector(rng, 40);
        const MatrixXd Q = random_matrix(rng, 100, 4);
        // Reduced metric as a full shape matrix: any S with S^T S = T works.
        const ShapeMatrix S = ShapeMatrix::full(
            (MatrixXd(4, 4) << plan.map, MatrixXd::Zero(4 - p, 4)).finished());
        const auto a = fit(RbfFamily::M0, S, X, f, 1e-8, 0.0);
        const auto b = fit(RbfFamily::M0, ShapeMatrix::isotropic(1.0, p), map_dataset(plan, X), f, 1e-8, 0.0);
        EXPECT_LT((predict(a, Q) - predict(b, map_dataset(plan, Q))).cwiseAbs().maxCoeff(), 1e-10) << "p=" << p;
        EXPECT_LT((S.theta() - reduced_theta(plan)).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Truncate, PrefixOfMap) {
    Rng rng(57);
    const auto plan = make_plan(decompose_theta(random_sigma(rng, ShapeMode::Full, 6)), FixedCount{5});
    for (Index q = 1; q < 5; ++q) {
        const auto t = truncate(plan, q);
        EXPECT_EQ(t.map, plan.map.topRows(q));
        EXPECT_EQ(t.map, make_plan(plan.spectrum, FixedCount{q}).map);
    }
    EXPECT_THROW(truncate(plan, 0), ArgumentError);
    EXPECT_THROW(truncate(plan, 7), ArgumentError);
}

TEST(Spectrum, ScalingCovariance) {
    Rng rng(58);
    const auto sigma = random_sigma(rng, ShapeMode::Full, 5);
    const auto a = decompose_theta(sigma);
    const auto b = decompose_theta(sigma.scaled(3.0));
    for (Index k = 0; k < 5; ++k) {
        EXPECT_NEAR(b.values(k), 9.0 * a.values(k), 1e-10 * b.values(0));
        EXPECT_NEAR(std::abs(a.vectors.col(k).dot(b.vectors.col(k))), 1.0, 1e-8);
    }
    const auto diag = random_sigma(rng, ShapeMode::Diagonal, 6);
    const auto r1 = rank_features_diagonal(diag);
    const auto r2 = rank_features_diagonal(diag.scaled(0.1));
    for (std::size_t k = 0; k < r1.size(); ++k) EXPECT_EQ(r1[k].feature, r2[k].feature);
}

TEST(RankFeatures, Examples) {
    const auto r = rank_features_diagonal(ShapeMatrix::diagonal((VectorXd(3) << 1, 3, 2).finished()));
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r[0].feature, 1);
    EXPECT_EQ(r[1].feature, 2);
    EXPECT_EQ(r[2].feature, 0);
    EXPECT_EQ(r[0].score, 9.0);
    EXPECT_EQ(r[1].score, 4.0);
    EXPECT_EQ(r[2].score, 1.0);

    const auto ties = rank_features_diagonal(ShapeMatrix::diagonal(VectorXd::Constant(4, 0.5)));
    for (Index j = 0; j < 4; ++j) EXPECT_EQ(ties[static_cast<std::size_t>(j)].feature, j);

    EXPECT_THROW(rank_features_diagonal(ShapeMatrix::full(MatrixXd::Identity(2, 2))), ArgumentError);
}
