#include <gtest/gtest.h>

#include <cmath>

#include "dekan/error.hpp"
#include "dekan/layers.hpp"
#include "test_util.hpp"

using namespace dekan;
using dekan::testing::check_module;
using dekan::testing::random_tensor;

namespace {

Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, int stride,
                          int pad) {
    const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int co = w.dim(0), k = w.dim(2);
    const int oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
    Tensor<double> y({n, co, oh, ow});
    for (int bi = 0; bi < n; ++bi)
        for (int o = 0; o < co; ++o)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double s = b ? (*b)[o] : 0.0;
                    for (int c = 0; c < ci; ++c)
                        for (int u = 0; u < k; ++u)
                            for (int v = 0; v < k; ++v) {
                                const int yy = i * stride - pad + u, xx = j * stride - pad + v;
                                if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                                s += x.at(bi, c, yy, xx) * w.at(o, c, u, v);
                            }
                    y.at(bi, o, i, j) = s;
                }
    return y;
}

void expect_close(const Tensor<double>& a, const Tensor<double>& b, double tol) {
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

TEST(Conv2d, MatchesDirectLoops) {
    for (const ConvSpec spec : {ConvSpec{3, 4, 3, 1, 1, true}, ConvSpec{2, 5, 7, 2, 3, false},
                                ConvSpec{4, 3, 1, 1, 0, true}, ConvSpec{3, 2, 3, 2, 1, true}}) {
        Conv2d<double> conv(spec);
        Rng rng(3);
        conv.init(rng);
        if (spec.bias) conv.bias().value = random_tensor({spec.out_channels}, 4);
        const auto x = random_tensor({2, spec.in_channels, 9, 8}, 5);
        expect_close(conv.forward(x),
                     naive_conv(x, conv.weight().value, spec.bias ? &conv.bias().value : nullptr, spec.stride,
                                spec.padding),
                     1e-12);
    }
}

TEST(Conv2d, Gradients) {
    for (const ConvSpec spec : {ConvSpec{3, 4, 3, 1, 1, true}, ConvSpec{2, 3, 7, 2, 3, false},
                                ConvSpec{3, 2, 1, 1, 0, true}, ConvSpec{2, 2, 3, 2, 1, false}}) {
        Conv2d<double> conv(spec);
        Rng rng(11);
        conv.init(rng);
        StateList<double> st;
        conv.collect(st, "");
        auto x = random_tensor({2, spec.in_channels, 7, 6}, 12);
        const auto r = check_module(
            x, {[&](const Tensor<double>& in) { return conv.forward(in); },
                [&](const Tensor<double>& dy) { return conv.backward(dy); }, st});
        EXPECT_TRUE(r.passed) << r.summary();
    }
}

TEST(Conv2d, OutputSize) {
    EXPECT_EQ(conv_out_size(64, 7, 2, 3), 32);
    EXPECT_EQ(conv_out_size(32, 3, 2, 1), 16);
    EXPECT_EQ(conv_out_size(5, 3, 1, 1), 5);
}

TEST(BatchNorm2d, TrainingNormalizesPerChannel) {
    BatchNorm2d<double> bn({3});
    const auto x = random_tensor({4, 3, 5, 5}, 21, -3.0, 5.0);
    const auto y = bn.forward(x, true);
    for (int c = 0; c < 3; ++c) {
        double mean = 0, sq = 0;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 25; ++i) {
                const double v = y.at(b, c, i / 5, i % 5);
                mean += v;
                sq += v * v;
            }
        mean /= 100;
        EXPECT_NEAR(mean, 0.0, 1e-12);
        EXPECT_NEAR(sq / 100 - mean * mean, 1.0, 1e-3);
    }
}

TEST(BatchNorm2d, RunningStatisticsUseUnbiasedVariance) {
    BatchNorm2d<double> bn({1});
    Tensor<double> x({1, 1, 1, 4}, std::vector<double>{1, 2, 3, 4});
    bn.forward(x, true);
    EXPECT_NEAR(bn.running_mean()[0], 0.1 * 2.5, 1e-12);
    EXPECT_NEAR(bn.running_var()[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);
}

TEST(BatchNorm2d, EvalUsesRunningStatistics) {
    BatchNorm2d<double> bn({2});
    bn.running_mean() = Tensor<double>({2}, std::vector<double>{1.0, -2.0});
    bn.running_var() = Tensor<double>({2}, std::vector<double>{4.0, 0.25});
    const auto x = random_tensor({1, 2, 2, 2}, 8);
    const auto y = bn.forward(x, false);
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(y.at(0, 0, i / 2, i % 2), (x.at(0, 0, i / 2, i % 2) - 1.0) / std::sqrt(4.0 + 1e-5), 1e-12);
        EXPECT_NEAR(y.at(0, 1, i / 2, i % 2), (x.at(0, 1, i / 2, i % 2) + 2.0) / std::sqrt(0.25 + 1e-5), 1e-12);
    }
}

TEST(BatchNorm2d, SingleValuePerChannelIsRejectedInTraining) {
    BatchNorm2d<double> bn({2});
    EXPECT_THROW(bn.forward(Tensor<double>({1, 2, 1, 1}), true), ConfigError);
}

TEST(BatchNorm2d, Gradients) {
    BatchNorm2d<double> bn({3});
    bn.scale().value = random_tensor({3}, 31, 0.5, 1.5);
    bn.shift().value = random_tensor({3}, 32);
    StateList<double> st;
    bn.collect(st, "");
    for (bool training : {true, false}) {
        auto x = random_tensor({2, 3, 3, 4}, 33, -2.0, 2.0);
        const auto r = check_module(
            x, {[&](const Tensor<double>& in) { return bn.forward(in, training); },
                [&](const Tensor<double>& dy) { return bn.backward(dy); }, st});
        EXPECT_TRUE(r.passed) << (training ? "training " : "eval ") << r.summary();
    }
}

TEST(LayerNorm, NormalizesTrailingAxis) {
    LayerNorm<double> ln(6);
    const auto x = random_tensor({2, 3, 6}, 41, -4.0, 4.0);
    const auto y = ln.forward(x);
    for (int r = 0; r < 6; ++r) {
        double mean = 0, sq = 0;
        for (int d = 0; d < 6; ++d) mean += y[r * 6 + d];
        mean /= 6;
        for (int d = 0; d < 6; ++d) sq += (y[r * 6 + d] - mean) * (y[r * 6 + d] - mean);
        EXPECT_NEAR(mean, 0.0, 1e-12);
        EXPECT_NEAR(sq / 6, 1.0, 1e-4);
    }
}

TEST(LayerNorm, RejectsSingleFeature) { EXPECT_THROW(LayerNorm<double>(1), ConfigError); }

TEST(LayerNorm, Gradients) {
    LayerNorm<double> ln(5);
    ln.scale().value = random_tensor({5}, 42, 0.5, 1.5);
    ln.shift().value = random_tensor({5}, 43);
    StateList<double> st;
    ln.collect(st, "");
    auto x = random_tensor({2, 4, 5}, 44, -2.0, 2.0);
    const auto r = check_module(x, {[&](const Tensor<double>& in) { return ln.forward(in); },
                                    [&](const Tensor<double>& dy) { return ln.backward(dy); }, st});
    EXPECT_TRUE(r.passed) << r.summary();
}

TEST(Activations, SiluValues) {
    EXPECT_NEAR(silu(1.0), 0.731058578630, 1e-9);
    EXPECT_EQ(silu(0.0), 0.0);
    EXPECT_NEAR(silu(-1.0), -0.268941421370, 1e-9);
    for (double x : {-3.0, -0.4, 0.0, 0.7, 2.5}) {
        EXPECT_NEAR(silu_grad(x), (silu(x + 1e-6) - silu(x - 1e-6)) / 2e-6, 1e-8);
    }
}

TEST(Activations, Gradients) {
    // Keep ReLU inputs away from the kink.
    auto x = random_tensor({2, 3, 4, 4}, 51, 0.1, 1.0);
    for (std::size_t i = 0; i < x.size(); i += 2) x[i] = -x[i];
    ReLU<double> relu;
    auto r = check_module(x, {[&](const Tensor<double>& in) { return relu.forward(in); },
                              [&](const Tensor<double>& dy) { return relu.backward(dy); }, {}});
    EXPECT_TRUE(r.passed) << r.summary();
    SiLU<double> act;
    r = check_module(x, {[&](const Tensor<double>& in) { return act.forward(in); },
                         [&](const Tensor<double>& dy) { return act.backward(dy); }, {}});
    EXPECT_TRUE(r.passed) << r.summary();
}

TEST(Upsample2x, MatchesHalfPixelBilinear) {
    const auto x = random_tensor({1, 2, 3, 5}, 61);
    Upsample2x<double> up;
    const auto y = up.forward(x);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 6, 10}));
    auto coord = [](int dst, int in, int& i0, int& i1, double& f) {
        double s = std::max((dst + 0.5) / 2.0 - 0.5, 0.0);
        i0 = std::min(static_cast<int>(std::floor(s)), in - 1);
        i1 = std::min(i0 + 1, in - 1);
        f = s - i0;
    };
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 10; ++j) {
                int y0, y1, x0, x1;
                double fy, fx;
                coord(i, 3, y0, y1, fy);
                coord(j, 5, x0, x1, fx);
                const double want = (1 - fy) * ((1 - fx) * x.at(0, c, y0, x0) + fx * x.at(0, c, y0, x1)) +
                                    fy * ((1 - fx) * x.at(0, c, y1, x0) + fx * x.at(0, c, y1, x1));
                EXPECT_NEAR(y.at(0, c, i, j), want, 1e-12);
            }
}

TEST(Upsample2x, ConstantStaysConstant) {
    Upsample2x<double> up;
    const auto y = up.forward(Tensor<double>({1, 1, 2, 2}, 3.25));
    for (double v : y.storage()) EXPECT_DOUBLE_EQ(v, 3.25);
}

TEST(Upsample2x, Gradients) {
    Upsample2x<double> up;
    auto x = random_tensor({2, 2, 3, 4}, 62);
    const auto r = check_module(x, {[&](const Tensor<double>& in) { return up.forward(in); },
                                    [&](const Tensor<double>& dy) { return up.backward(dy); }, {}});
    EXPECT_TRUE(r.passed) << r.summary();
}

TEST(AdaptiveAvgPool2d, QuadrantMeans) {
    Tensor<double> x({1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) x[i] = i + 1;
    AdaptiveAvgPool2d<double> pool(2, 2);
    const auto y = pool.forward(x);
    EXPECT_EQ(y.storage(), (std::vector<double>{3.5, 5.5, 11.5, 13.5}));
}

TEST(AdaptiveAvgPool2d, UnevenBinsOverlap) {
    Tensor<double> x({1, 1, 1, 5}, std::vector<double>{1, 2, 3, 4, 5});
    AdaptiveAvgPool2d<double> pool(1, 3);
    // bins [0,2), [1,4), [3,5)
    EXPECT_EQ(pool.forward(x).storage(), (std::vector<double>{1.5, 3.0, 4.5}));
}

TEST(AdaptiveAvgPool2d, Gradients) {
    AdaptiveAvgPool2d<double> pool(2, 3);
    auto x = random_tensor({2, 2, 5, 7}, 71);
    const auto r = check_module(x, {[&](const Tensor<double>& in) { return pool.forward(in); },
                                    [&](const Tensor<double>& dy) { return pool.backward(dy); }, {}});
    EXPECT_TRUE(r.passed) << r.summary();
}

TEST(MaxPool2d, PicksWindowMaximum) {
    Tensor<double> x({1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) x[i] = i;
    MaxPool2d<double> pool(3, 2, 1);
    EXPECT_EQ(pool.forward(x).storage(), (std::vector<double>{5, 7, 13, 15}));
}

TEST(MaxPool2d, Gradients) {
    // Distinct values keep the argmax stable under the probe step.
    Tensor<double> x({2, 2, 6, 6});
    std::vector<int> order(x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::shuffle(order.begin(), order.end(), Rng(72));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * order[i];
    MaxPool2d<double> pool(3, 2, 1);
    const auto r = check_module(x, {[&](const Tensor<double>& in) { return pool.forward(in); },
                                    [&](const Tensor<double>& dy) { return pool.backward(dy); }, {}});
    EXPECT_TRUE(r.passed) << r.summary();
}

TEST(ConvBnRelu, Gradients) {
    ConvBnRelu<double> unit({3, 4, 3, 1, 1, true});
    Rng rng(81);
    unit.init(rng);
    StateList<double> st;
    unit.collect(st, "");
    auto x = random_tensor({2, 3, 5, 5}, 82);
    const auto r = check_module(x, {[&](const Tensor<double>& in) { return unit.forward(in, true); },
                                    [&](const Tensor<double>& dy) { return unit.backward(dy); }, st});
    EXPECT_TRUE(r.passed) << r.summary();
}

TEST(ConvBnRelu, StateNames) {
    ConvBnRelu<float> unit({3, 4, 3, 1, 1, true});
    StateList<float> st;
    unit.collect(st, "x.");
    std::vector<std::string> names;
    for (const auto& e : st) names.push_back(e.name);
    EXPECT_EQ(names, (std::vector<std::string>{"x.conv.weight", "x.conv.bias", "x.bn.weight", "x.bn.bias",
                                               "x.bn.running_mean", "x.bn.running_var"}));
}

TEST(TokenLayout, RoundTrip) {
    const auto m = random_tensor({2, 3, 4, 5}, 91);
    const auto t = map_to_tokens(m);
    ASSERT_EQ(t.shape(), (Shape{2, 20, 3}));
    EXPECT_EQ(t[(1 * 20 + 7) * 3 + 2], m.at(1, 2, 1, 2));
    EXPECT_EQ(tokens_to_map(t, 4, 5).storage(), m.storage());
}
