#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "dualeval/errors.hpp"
#include "dualeval/hashing.hpp"
#include "dualeval/metrics.hpp"
#include "dualeval/probes.hpp"
#include "oracles.hpp"

using namespace dualeval;

namespace {

Eigen::MatrixXd gaussian(SplitMix& rng, Eigen::Index n, Eigen::Index d) {
    Eigen::MatrixXd m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) {
            const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
            m(i, j) = std::sqrt(-2 * std::log(u1)) * std::cos(2 * M_PI * u2);
        }
    return m;
}

FeatureMatrix fm(Eigen::MatrixXd v, int layer = 0) {
    FeatureMatrix f;
    f.values = std::move(v);
    f.layer = layer;
    for (Eigen::Index i = 0; i < f.values.rows(); ++i) f.ids.push_back("e" + std::to_string(i));
    return f;
}

std::vector<double> as_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST(FitProbe, PlantedLine) {
    auto x = fm(Eigen::MatrixXd{{1}, {2}, {3}});
    std::vector<double> y{2, 4, 6};
    auto m = fit_probe(x, y, 0.0);
    auto raw = raw_units(m);
    EXPECT_NEAR(raw.weights(0), 2.0, 1e-10);
    EXPECT_NEAR(raw.intercept, 0.0, 1e-10);
    auto p = predict(m, x);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], y[i], 1e-12);
}

TEST(FitProbe, ConstantTarget) {
    SplitMix rng(1);
    auto x = fm(gaussian(rng, 20, 3));
    std::vector<double> y(20, 2.5);
    auto m = fit_probe(x, y, 0.0);
    EXPECT_LT(m.weights.norm(), 1e-12);
    EXPECT_DOUBLE_EQ(m.bias, 2.5);
}

TEST(FitProbe, MatchesGradientDescent) {
    SplitMix rng(2);
    for (double lambda : {0.0, 1e-3, 0.5}) {
        auto x = fm(gaussian(rng, 50, 8));
        Eigen::VectorXd y = gaussian(rng, 50, 1).col(0);
        auto m = fit_probe(x, as_vec(y), lambda);
        auto z = oracle::standardize(x.values);
        auto gd = oracle::gradient_descent(z.z, y, lambda);
        EXPECT_LT((m.weights - gd.w).norm(), 1e-6 * (1 + gd.w.norm()));
        EXPECT_NEAR(m.bias, gd.b, 1e-6);
        EXPECT_LE(m.gradient_norm, 1e-8 * (1 + y.norm()));
    }
}

TEST(FitProbe, RankDeficientIsMinimumNorm) {
    SplitMix rng(3);
    Eigen::MatrixXd base = gaussian(rng, 12, 3);
    Eigen::MatrixXd x(12, 6);
    x << base, base * Eigen::Matrix3d::Random();
    Eigen::VectorXd y = gaussian(rng, 12, 1).col(0);
    auto m = fit_probe(fm(x), as_vec(y), 0.0);
    EXPECT_TRUE(m.rank_deficient);
    auto z = oracle::standardize(x);
    auto gd = oracle::gradient_descent(z.z, y, 0.0);
    EXPECT_LT((m.weights - gd.w).norm(), 1e-6);

    auto wide = fm(gaussian(rng, 5, 20));
    Eigen::VectorXd yw = gaussian(rng, 5, 1).col(0);
    auto mw = fit_probe(wide, as_vec(yw), 0.0);
    EXPECT_TRUE(mw.rank_deficient);
    auto gw = oracle::gradient_descent(oracle::standardize(wide.values).z, yw, 0.0);
    EXPECT_LT((mw.weights - gw.w).norm(), 1e-6);
    auto pw = predict(mw, wide);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(pw[i], yw(i), 1e-8);
}

TEST(FitProbe, ResidualsOrthogonal) {
    SplitMix rng(4);
    auto x = fm(gaussian(rng, 80, 10));
    auto y = as_vec(gaussian(rng, 80, 1).col(0));
    auto m = fit_probe(x, y, 0.0);
    EXPECT_FALSE(m.rank_deficient);
    auto p = predict(m, x);
    auto z = oracle::standardize(x.values).z;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        double dot = 0;
        for (int i = 0; i < 80; ++i) dot += z(i, c) * (y[i] - p[i]);
        EXPECT_NEAR(dot, 0.0, 1e-8);
    }
}

TEST(FitProbe, ShrinkageMonotone) {
    SplitMix rng(5);
    auto x = fm(gaussian(rng, 40, 6));
    auto y = as_vec(gaussian(rng, 40, 1).col(0));
    double prev = INFINITY;
    for (double lambda : {0.0, 1e-4, 1e-2, 1e-1, 1.0, 10.0, 100.0}) {
        const double norm = fit_probe(x, y, lambda).weights.norm();
        EXPECT_LE(norm, prev + 1e-12);
        prev = norm;
    }
}

TEST(FitProbe, ZeroVarianceColumnInvariant) {
    SplitMix rng(6);
    Eigen::MatrixXd a = gaussian(rng, 30, 4);
    Eigen::MatrixXd b(30, 5);
    b << a, Eigen::VectorXd::Constant(30, 7.0);
    auto y = as_vec(gaussian(rng, 30, 1).col(0));
    auto pa = predict(fit_probe(fm(a), y, 1e-3), fm(a));
    auto mb = fit_probe(fm(b), y, 1e-3);
    EXPECT_FALSE(mb.active[4]);
    EXPECT_EQ(mb.weights(4), 0.0);
    auto pb = predict(mb, fm(b));
    for (int i = 0; i < 30; ++i) EXPECT_NEAR(pa[i], pb[i], 1e-12);
}

TEST(Predict, ZeroWeightAndMismatch) {
    ProbeModel m;
    m.weights = Eigen::VectorXd::Zero(2);
    m.bias = 1.25;
    m.center = Eigen::VectorXd::Zero(2);
    m.scale = Eigen::VectorXd::Ones(2);
    m.active = {true, true};
    auto p = predict(m, fm(Eigen::MatrixXd{{1, 2}, {3, 4}}));
    EXPECT_EQ(p, (std::vector<double>{1.25, 1.25}));
    EXPECT_THROW(predict(m, fm(Eigen::MatrixXd{{1, 2, 3}})), DimensionMismatch);
}

TEST(Planted, RecoversWeightsAndRanks) {
    SplitMix rng(7);
    Eigen::MatrixXd x = gaussian(rng, 150, 12);
    Eigen::VectorXd w = gaussian(rng, 12, 1).col(0);
    Eigen::VectorXd y = x * w;
    y.array() += 0.75;
    std::vector<std::size_t> train(100), test(50);
    std::iota(train.begin(), train.end(), 0);
    std::iota(test.begin(), test.end(), 100);
    auto all = fm(x);
    auto tr = all.select(train), te = all.select(test);
    std::vector<double> ytr(y.data(), y.data() + 100), yte(y.data() + 100, y.data() + 150);
    auto m = fit_probe(tr, ytr, 0.0);
    auto raw = raw_units(m);
    EXPECT_LT((raw.weights - w).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(raw.intercept, 0.75, 1e-8);
    EXPECT_EQ(spearman_rho(predict(m, te), yte), 1.0);
}

TEST(LayerSweep, PlantedLayerWinsBothRules) {
    SplitMix rng(8);
    const int n = 120;
    Eigen::MatrixXd signal = gaussian(rng, n, 4);
    Eigen::VectorXd y = signal * Eigen::Vector4d(1, -2, 0.5, 1);
    std::vector<FeatureMatrix> layers{fm(gaussian(rng, n, 4), 0), fm(signal, 1), fm(gaussian(rng, n, 4), 2)};
    SweepSplit split;
    for (int i = 0; i < n; ++i) (i < 60 ? split.train : i < 90 ? split.val : split.test).push_back(i);
    auto r = layer_sweep(layers, as_vec(y), split, {});
    EXPECT_EQ(r.selected_by_rmse, 1);
    EXPECT_EQ(r.selected_by_val, 1);
    EXPECT_NEAR(*r.test_at_val, 1.0, 1e-12);
}

TEST(LayerSweep, TiesPickLowestLayerAndExcludeNonFinite) {
    SplitMix rng(9);
    Eigen::MatrixXd x = gaussian(rng, 40, 3);
    auto y = as_vec(gaussian(rng, 40, 1).col(0));
    Eigen::MatrixXd bad = x;
    bad(3, 1) = NAN;
    std::vector<FeatureMatrix> layers{fm(bad, 0), fm(x, 1), fm(x, 2)};
    SweepSplit split;
    for (int i = 0; i < 40; ++i) (i < 20 ? split.train : i < 30 ? split.val : split.test).push_back(i);
    auto r = layer_sweep(layers, y, split, {});
    EXPECT_TRUE(r.find(0)->excluded);
    EXPECT_EQ(r.selected_by_rmse, 1);
    EXPECT_EQ(r.selected_by_val, 1);
}

TEST(Magnitude, Examples) {
    std::vector<FeatureMatrix> zero{fm(Eigen::MatrixXd::Zero(3, 2))};
    EXPECT_EQ(magnitude_profile(zero)[0], 0.0);
    std::vector<FeatureMatrix> one{fm(Eigen::MatrixXd{{3, 4}})};
    EXPECT_DOUBLE_EQ(magnitude_profile(one)[0], 5.0);
    SplitMix rng(10);
    auto a = fm(gaussian(rng, 10, 3));
    auto b = a;
    b.values *= 2;
    std::vector<FeatureMatrix> ab{a, b};
    auto prof = magnitude_profile(ab);
    EXPECT_NEAR(prof[1], 2 * prof[0], 1e-12);
}

TEST(Virulence, TenNinetySplit) {
    SplitMix rng(11);
    const int n = 369;
    Eigen::MatrixXd x = gaussian(rng, n, 3);
    Eigen::VectorXd y = x.col(0) + 0.1 * gaussian(rng, n, 1).col(0);
    std::vector<FeatureMatrix> layers{fm(gaussian(rng, n, 3), 0), fm(x, 1)};
    VirulenceProbeConfig cfg;
    cfg.seed = 2;
    auto r = probe_virulence(layers, as_vec(y), cfg);
    EXPECT_EQ(r.n_train, 37u);
    EXPECT_EQ(r.n_test, 332u);
    EXPECT_EQ(r.best_test_layer, 1);
    EXPECT_EQ(r.magnitude.size(), 2u);
}

TEST(FeatureFile, RoundTrip) {
    SplitMix rng(12);
    auto f = fm(gaussian(rng, 7, 5), 3);
    f.values(0, 0) = -0.0;
    f.values(1, 1) = 1e-310;
    f.pooling = "max";
    f.backend = "step-0";
    auto path = std::filesystem::temp_directory_path() / "dualeval_features.bin";
    write_feature_matrix(path, f);
    auto g = read_feature_matrix(path);
    EXPECT_EQ(g.values, f.values);
    EXPECT_EQ(g.ids, f.ids);
    EXPECT_EQ(g.layer, 3);
    EXPECT_EQ(g.pooling, "max");
    EXPECT_EQ(g.backend, "step-0");
}
