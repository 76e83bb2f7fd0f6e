#include <gtest/gtest.h>

#include <random>

#include "dekan/error.hpp"
#include "dekan/metrics.hpp"
#include "dekan/tensor.hpp"

using namespace dekan;

namespace {

struct Oracle {
    double miou, dice, accuracy, recall;
};

// Per-pixel scan, binary case, written straight from the metric definitions.
Oracle oracle_metrics(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& target) {
    double iou_sum = 0.0;
    double dice = 0, accuracy = 0, recall = 0;
    for (int c = 0; c < 2; ++c) {
        long tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const bool p = pred[i] == c, t = target[i] == c;
            if (p && t) ++tp;
            else if (p) ++fp;
            else if (t) ++fn;
            else ++tn;
        }
        const bool absent = tp + fp + fn == 0;
        iou_sum += absent ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
        if (c == 1) {
            dice = (2.0 * tp + 1e-5) / (2.0 * tp + fp + fn + 1e-5);
            accuracy = static_cast<double>(tp + tn) / static_cast<double>(pred.size());
            recall = tp + fn == 0 ? (absent ? 1.0 : 0.0) : static_cast<double>(tp) / static_cast<double>(tp + fn);
        }
    }
    return {iou_sum / 2.0, dice, accuracy, recall};
}

}  // namespace

TEST(ConfusionCounts, TwoByTwoCase) {
    const std::vector<std::uint8_t> pred{1, 0, 1, 0}, target{1, 1, 0, 0};
    const auto c = confusion_counts(pred, target, 2);
    EXPECT_EQ(c.tp[1], 1u);
    EXPECT_EQ(c.fp[1], 1u);
    EXPECT_EQ(c.fn[1], 1u);
    EXPECT_EQ(c.tn[1], 1u);
    const auto m = compute_metrics(c);
    // class 0 has the same tallies, so mIoU equals the class-1 IoU.
    EXPECT_EQ(m.miou, 1.0 / 3.0);
    EXPECT_EQ(m.accuracy, 0.5);
    EXPECT_EQ(m.recall, 0.5);
}

TEST(ConfusionCounts, PerfectPrediction) {
    const std::vector<std::uint8_t> m{0, 1, 1, 0, 1, 0, 0};
    const auto c = confusion_counts(m, m, 2);
    for (int k = 0; k < 2; ++k) {
        EXPECT_EQ(c.fp[k], 0u);
        EXPECT_EQ(c.fn[k], 0u);
    }
    const auto r = compute_metrics(c);
    EXPECT_EQ(r.miou, 1.0);
    EXPECT_EQ(r.dice, 1.0);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.recall, 1.0);
}

TEST(ConfusionCounts, AllBackground) {
    const std::vector<std::uint8_t> zeros(9, 0);
    const auto c = confusion_counts(zeros, zeros, 2);
    EXPECT_EQ(c.tp[1], 0u);
    EXPECT_EQ(c.tn[1], 9u);
    const auto r = compute_metrics(c);
    EXPECT_EQ(r.miou, 1.0);
    EXPECT_EQ(r.dice, 1.0);
    EXPECT_EQ(r.recall, 1.0);
}

TEST(ConfusionCounts, MissedForegroundScoresZero) {
    const std::vector<std::uint8_t> pred{1, 1}, target{0, 0};
    const auto r = compute_metrics(confusion_counts(pred, target, 2));
    EXPECT_EQ(r.recall, 0.0);
    EXPECT_EQ(r.miou, 0.0);
}

TEST(ConfusionCounts, MultiClassTallies) {
    const std::vector<std::uint8_t> pred{0, 1, 2, 2, 1}, target{0, 2, 2, 1, 1};
    const auto c = confusion_counts(pred, target, 3);
    EXPECT_EQ(c.tp, (std::vector<std::uint64_t>{1, 1, 1}));
    EXPECT_EQ(c.fp, (std::vector<std::uint64_t>{0, 1, 1}));
    EXPECT_EQ(c.fn, (std::vector<std::uint64_t>{0, 1, 1}));
    for (int k = 0; k < 3; ++k) EXPECT_EQ(c.total(k), 5u);
}

TEST(ConfusionCounts, Errors) {
    const std::vector<std::uint8_t> a{0, 2}, b{0, 1}, c{0};
    EXPECT_THROW(confusion_counts(a, b, 2), InputError);
    EXPECT_THROW(confusion_counts(b, c, 2), InputError);
    EXPECT_THROW(compute_metrics(ConfusionCounts(2), 2), ConfigError);
}

TEST(ConfusionCounts, AccumulationEqualsConcatenation) {
    const std::vector<std::uint8_t> p1{1, 0, 1}, t1{1, 1, 0}, p2{0, 0}, t2{1, 0};
    auto sum = confusion_counts(p1, t1, 2);
    sum += confusion_counts(p2, t2, 2);
    const std::vector<std::uint8_t> p{1, 0, 1, 0, 0}, t{1, 1, 0, 1, 0};
    EXPECT_EQ(sum, confusion_counts(p, t, 2));
}

TEST(Metrics, MatchExhaustiveOracleOnRandomMasks) {
    Rng rng(2024);
    std::uniform_int_distribution<int> side(1, 16);
    std::uniform_real_distribution<double> density(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = side(rng) * side(rng);
        const double dp = density(rng), dt = density(rng);
        std::bernoulli_distribution bp(dp), bt(dt);
        std::vector<std::uint8_t> pred(n), target(n);
        for (int i = 0; i < n; ++i) {
            pred[i] = bp(rng);
            target[i] = bt(rng);
        }
        const auto got = compute_metrics(confusion_counts(pred, target, 2));
        const auto want = oracle_metrics(pred, target);
        ASSERT_NEAR(got.miou, want.miou, 1e-12) << trial;
        ASSERT_NEAR(got.dice, want.dice, 1e-12) << trial;
        ASSERT_NEAR(got.accuracy, want.accuracy, 1e-12) << trial;
        ASSERT_NEAR(got.recall, want.recall, 1e-12) << trial;
        for (double v : {got.miou, got.dice, got.accuracy, got.recall}) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
    }
}
