#include <gtest/gtest.h>

#include <cmath>

#include "dekan/error.hpp"
#include "dekan/losses.hpp"
#include "test_util.hpp"

using namespace dekan;
using dekan::testing::random_tensor;

namespace {

Tensor<double> binary_target(Shape shape, std::uint64_t seed) {
    Tensor<double> t(std::move(shape));
    Rng rng(seed);
    for (auto& v : t.storage()) v = static_cast<double>(rng() & 1u);
    return t;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(BceLoss, ZeroLogitsGiveLn2) {
    const Tensor<double> logits({2, 1, 3, 3});
    EXPECT_NEAR(bce_loss(logits, binary_target({2, 1, 3, 3}, 1)), std::log(2.0), 1e-12);
}

TEST(BceLoss, TwoPixelCase) {
    const Tensor<double> logits({1, 1, 1, 2}, std::vector<double>{1.0, -1.0});
    const Tensor<double> target({1, 1, 1, 2}, std::vector<double>{1.0, 0.0});
    EXPECT_NEAR(bce_loss(logits, target), 0.313262, 1e-6);
    EXPECT_NEAR(bce_loss(logits, target), -std::log(sigmoid(1.0)), 1e-15);
}

TEST(BceLoss, SaturatedCorrectIsNearZero) {
    const auto target = binary_target({1, 1, 4, 4}, 2);
    Tensor<double> logits(target.shape());
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = target[i] > 0.5 ? 20.0 : -20.0;
    EXPECT_LT(bce_loss(logits, target), 1e-8);
}

TEST(BceLoss, StableForLargeLogits) {
    const Tensor<double> logits({1, 1, 1, 2}, std::vector<double>{800.0, -800.0});
    const Tensor<double> target({1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
    EXPECT_NEAR(bce_loss(logits, target), 800.0, 1e-9);
}

TEST(BceLoss, MatchesNaiveFormula) {
    const auto logits = random_tensor({2, 1, 3, 4}, 3, -4, 4);
    const auto target = binary_target(logits.shape(), 4);
    double want = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double p = sigmoid(logits[i]);
        want -= target[i] * std::log(p) + (1 - target[i]) * std::log(1 - p);
    }
    EXPECT_NEAR(bce_loss(logits, target), want / logits.size(), 1e-12);
}

TEST(BceLoss, InvariantUnderBatchReordering) {
    const auto logits = random_tensor({2, 1, 3, 3}, 5, -3, 3);
    const auto target = binary_target(logits.shape(), 6);
    Tensor<double> l2(logits.shape()), t2(target.shape());
    for (std::size_t i = 0; i < 9; ++i) {
        l2[i] = logits[i + 9];
        l2[i + 9] = logits[i];
        t2[i] = target[i + 9];
        t2[i + 9] = target[i];
    }
    EXPECT_NEAR(bce_loss(logits, target), bce_loss(l2, t2), 1e-15);
}

TEST(BceLoss, RejectsNonBinaryTarget) {
    const Tensor<double> logits({1, 1, 1, 2});
    const Tensor<double> target({1, 1, 1, 2}, std::vector<double>{0.0, 0.5});
    EXPECT_THROW(bce_loss(logits, target), InputError);
    EXPECT_THROW(bce_loss(logits, Tensor<double>({1, 1, 2, 2})), InputError);
}

TEST(DiceCoefficient, EmptyVersusEmptyIsOne) {
    const std::vector<double> zeros(16, 0.0);
    EXPECT_EQ(dice_coefficient(zeros, zeros), 1.0);
    EXPECT_EQ(kDiceSmoothing, 1e-5);
}

TEST(DiceCoefficient, HalfOverlap) {
    const std::vector<double> p{1, 1, 0, 0}, y{1, 0, 1, 0};
    EXPECT_NEAR(dice_coefficient(p, y), (2.0 + 1e-5) / (4.0 + 1e-5), 1e-15);
}

TEST(DiceCoefficient, IdenticalNonEmptyMasks) {
    const std::vector<double> m{1, 0, 1, 1, 0};
    EXPECT_NEAR(dice_coefficient(m, m), 1.0, 1e-6);
}

TEST(DiceLoss, EmptyTargetWithEmptyPrediction) {
    Tensor<double> logits({1, 1, 2, 2}, -50.0);
    EXPECT_NEAR(dice_loss(logits, Tensor<double>({1, 1, 2, 2})), 0.0, 1e-6);
}

TEST(DiceLoss, DualityWithCoefficientOnHardMasks) {
    // Saturated logits make sigmoid exactly 0/1 in double.
    const auto mask = binary_target({1, 1, 4, 4}, 7);
    const auto target = binary_target({1, 1, 4, 4}, 8);
    Tensor<double> logits(mask.shape());
    for (std::size_t i = 0; i < mask.size(); ++i) logits[i] = mask[i] > 0.5 ? 800.0 : -800.0;
    EXPECT_NEAR(dice_coefficient(mask.storage(), target.storage()) + dice_loss(logits, target), 1.0, 1e-12);
}

TEST(CombinedLoss, ReferenceValue) {
    const Tensor<double> logits({1, 1, 2, 2});
    const Tensor<double> target({1, 1, 2, 2}, std::vector<double>{1, 1, 0, 0});
    const auto v = combined_loss(logits, target);
    EXPECT_NEAR(v.total, 0.5 * std::log(2.0) + (1.0 - (2.0 + 1e-5) / (4.0 + 1e-5)), 1e-12);
    // 0.846574 is the rounded value with the smoothing term dropped.
    EXPECT_NEAR(v.total, 0.846574, 5e-6);
}

TEST(CombinedLoss, TotalIsHalfBcePlusDice) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto logits = random_tensor({2, 1, 4, 4}, seed, -5, 5);
        const auto target = binary_target(logits.shape(), seed + 100);
        const auto v = combined_loss(logits, target);
        EXPECT_NEAR(v.total, 0.5 * v.bce_part + v.dice_part, 1e-12);
        EXPECT_NEAR(v.bce_part, bce_loss(logits, target), 1e-12);
        EXPECT_NEAR(v.dice_part, dice_loss(logits, target), 1e-12);
        EXPECT_GE(v.total, 0.0);
        EXPECT_GE(v.bce_part, 0.0);
    }
}

TEST(CombinedLoss, PerfectSaturatedPrediction) {
    const auto target = binary_target({1, 1, 4, 4}, 9);
    Tensor<double> logits(target.shape());
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = target[i] > 0.5 ? 30.0 : -30.0;
    EXPECT_LT(combined_loss(logits, target).total, 1e-6);
}

TEST(CombinedLoss, GradientOverwritesBuffer) {
    const auto logits = random_tensor({1, 1, 4, 4}, 10, -2, 2);
    const auto target = binary_target(logits.shape(), 11);
    Tensor<double> g1, g2(logits.shape(), 123.0);
    combined_loss(logits, target, &g1);
    combined_loss(logits, target, &g2);
    EXPECT_EQ(g1.storage(), g2.storage());
}

TEST(Losses, Gradients) {
    auto logits = random_tensor({1, 1, 4, 4}, 12, -3, 3);
    const auto target = binary_target(logits.shape(), 13);
    Tensor<double> grad(logits.shape());
    for (int which = 0; which < 3; ++which) {
        auto value = [&](Tensor<double>* g) {
            if (which == 0) return bce_loss(logits, target, g);
            if (which == 1) return dice_loss(logits, target, g);
            return combined_loss(logits, target, g).total;
        };
        const auto r = gradient_check([&] { return value(nullptr); },
                                      [&] {
                                          grad.zero();
                                          value(&grad);
                                      },
                                      {{"logits", &logits, &grad}});
        EXPECT_TRUE(r.passed) << which << " " << r.summary();
    }
}

TEST(Losses, FloatAndDoubleAgree) {
    const auto logits = random_tensor({1, 1, 8, 8}, 14, -3, 3);
    const auto target = binary_target(logits.shape(), 15);
    EXPECT_NEAR(combined_loss(logits.cast<float>(), target.cast<float>()).total, combined_loss(logits, target).total,
                1e-5);
}
