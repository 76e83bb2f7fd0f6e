#include <gtest/gtest.h>

#include <algorithm>
#include <opencv2/imgcodecs.hpp>
#include <set>

#include "dekan/data.hpp"
#include "dekan/error.hpp"
#include "test_util.hpp"

using namespace dekan;
namespace fs = std::filesystem;

namespace {

cv::Mat solid_image(int h, int w, int seed) {
    cv::Mat m(h, w, CV_8UC3);
    cv::randu(m, cv::Scalar::all(0), cv::Scalar::all(256));
    m.at<cv::Vec3b>(0, 0) = cv::Vec3b(seed, seed, seed);
    return m;
}

void write_png(const fs::path& path, const cv::Mat& m) {
    fs::create_directories(path.parent_path());
    ASSERT_TRUE(cv::imwrite(path.string(), m));
}

std::set<std::string> ids(const std::vector<SamplePair>& v) {
    std::set<std::string> out;
    for (const auto& p : v) out.insert(p.id);
    return out;
}

std::vector<SamplePair> numbered(int n) {
    std::vector<SamplePair> out;
    for (int i = 0; i < n; ++i) out.push_back({"s" + std::to_string(i), cv::Mat(), cv::Mat()});
    return out;
}

bool same_pixels(const cv::Mat& a, const cv::Mat& b) {
    return a.size() == b.size() && a.type() == b.type() && cv::norm(a, b, cv::NORM_INF) == 0.0;
}

}  // namespace

TEST(LoadDataset, MissingRootIsEmpty) {
    dekan::testing::TempDir dir("empty");
    EXPECT_TRUE(load_dataset(dir.path / "nope").empty());
    EXPECT_TRUE(load_dataset(dir.path).empty());
}

TEST(LoadDataset, PairsSortedAndMasksBinarized) {
    dekan::testing::TempDir dir("load");
    cv::Mat mask(4, 3, CV_8UC1, cv::Scalar(0));
    mask.at<uchar>(0, 0) = 200;
    mask.at<uchar>(1, 1) = 255;
    mask.at<uchar>(2, 2) = 127;
    mask.at<uchar>(3, 0) = 128;
    for (const std::string id : {"b", "a", "c"}) {
        write_png(dir.path / "images" / (id + ".png"), solid_image(4, 3, 1));
        write_png(dir.path / "masks" / (id + ".png"), mask);
    }
    const auto pairs = load_dataset(dir.path);
    ASSERT_EQ(pairs.size(), 3u);
    EXPECT_EQ(pairs[0].id, "a");
    EXPECT_EQ(pairs[2].id, "c");
    const cv::Mat& m = pairs[1].mask;
    EXPECT_EQ(m.type(), CV_8UC1);
    EXPECT_EQ(m.at<uchar>(0, 0), 255);
    EXPECT_EQ(m.at<uchar>(1, 1), 255);
    EXPECT_EQ(m.at<uchar>(2, 2), 0);
    EXPECT_EQ(m.at<uchar>(3, 0), 255);
    EXPECT_EQ(m.at<uchar>(0, 1), 0);
    EXPECT_EQ(pairs[1].image.type(), CV_8UC3);
}

TEST(LoadDataset, OrphansAreListed) {
    dekan::testing::TempDir dir("orphans");
    const cv::Mat mask(4, 4, CV_8UC1, cv::Scalar(0));
    write_png(dir.path / "images" / "both.png", solid_image(4, 4, 1));
    write_png(dir.path / "masks" / "both.png", mask);
    write_png(dir.path / "images" / "lonely_image.png", solid_image(4, 4, 1));
    write_png(dir.path / "masks" / "lonely_mask.png", mask);
    try {
        load_dataset(dir.path);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("lonely_image"), std::string::npos) << msg;
        EXPECT_NE(msg.find("lonely_mask"), std::string::npos) << msg;
        EXPECT_EQ(msg.find("both"), std::string::npos) << msg;
    }
}

TEST(LoadDataset, DimensionMismatchNamesSample) {
    dekan::testing::TempDir dir("dims");
    write_png(dir.path / "images" / "x1.png", solid_image(8, 8, 1));
    write_png(dir.path / "masks" / "x1.png", cv::Mat(8, 6, CV_8UC1, cv::Scalar(0)));
    try {
        load_dataset(dir.path);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("x1"), std::string::npos) << e.what();
    }
}

TEST(LoadDataset, SaveLoadRoundTrip) {
    dekan::testing::TempDir dir("roundtrip");
    const auto pairs = synth_generate(3, 32, 5);
    save_dataset(pairs, dir.path);
    const auto back = load_dataset(dir.path);
    ASSERT_EQ(back.size(), pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        EXPECT_EQ(back[i].id, pairs[i].id);
        EXPECT_TRUE(same_pixels(back[i].image, pairs[i].image));
        EXPECT_TRUE(same_pixels(back[i].mask, pairs[i].mask));
    }
}

TEST(Augment, NoneIsIdentity) {
    const cv::Mat img = solid_image(16, 12, 3);
    Rng rng(1);
    EXPECT_TRUE(same_pixels(augment(img, AugmentSpec::none(), rng), img));
}

TEST(Augment, ZeroProbabilityIsIdentity) {
    AugmentSpec spec;
    spec.probability = 0.0;
    const cv::Mat img = solid_image(16, 12, 3);
    Rng rng(1);
    EXPECT_TRUE(same_pixels(augment(img, spec, rng), img));
}

TEST(Augment, KeepsGeometryAndTypeAndChangesPixels) {
    const cv::Mat img = solid_image(20, 13, 3);
    Rng rng(7);
    bool changed = false;
    for (int i = 0; i < 5; ++i) {
        const cv::Mat out = augment(img, AugmentSpec{}, rng);
        EXPECT_EQ(out.size(), img.size());
        EXPECT_EQ(out.type(), CV_8UC3);
        changed = changed || !same_pixels(out, img);
    }
    EXPECT_TRUE(changed);
}

TEST(Augment, SeedDeterminism) {
    const cv::Mat img = solid_image(16, 16, 3);
    Rng a(11), b(11);
    for (int i = 0; i < 4; ++i) EXPECT_TRUE(same_pixels(augment(img, AugmentSpec{}, a), augment(img, AugmentSpec{}, b)));
}

TEST(Augment, RejectsBadInput) {
    Rng rng(1);
    EXPECT_THROW(augment(cv::Mat(4, 4, CV_8UC1), AugmentSpec{}, rng), InputError);
    AugmentSpec spec;
    spec.blur_min = 2;
    EXPECT_THROW(augment(solid_image(4, 4, 1), spec, rng), ConfigError);
}

TEST(AugmentSpecValidate, Ranges) {
    EXPECT_NO_THROW(AugmentSpec{}.validate());
    EXPECT_NO_THROW(AugmentSpec::none().validate());
    auto with = [](auto edit) {
        AugmentSpec s;
        edit(s);
        return s;
    };
    EXPECT_THROW(with([](AugmentSpec& s) { s.hue_shift_limit = -1; }).validate(), ConfigError);
    EXPECT_THROW(with([](AugmentSpec& s) { s.blur_max = 6; }).validate(), ConfigError);
    EXPECT_THROW(with([](AugmentSpec& s) { s.blur_min = 9; }).validate(), ConfigError);
    EXPECT_THROW(with([](AugmentSpec& s) { s.probability = 1.5; }).validate(), ConfigError);
}

TEST(Split, EightyTwentyDisjointAndComplete) {
    const auto [train, val] = split_dataset(numbered(10), 0.8, 42);
    EXPECT_EQ(train.size(), 8u);
    EXPECT_EQ(val.size(), 2u);
    auto all = ids(train);
    for (const auto& id : ids(val)) EXPECT_TRUE(all.insert(id).second) << id;
    EXPECT_EQ(all.size(), 10u);
}

TEST(Split, SeedDeterminesPartition) {
    const auto a = split_dataset(numbered(20), 0.8, 3);
    const auto b = split_dataset(numbered(20), 0.8, 3);
    EXPECT_EQ(ids(a.second), ids(b.second));
    bool differs = false;
    for (std::uint64_t s = 4; s < 10 && !differs; ++s) differs = ids(split_dataset(numbered(20), 0.8, s).second) != ids(a.second);
    EXPECT_TRUE(differs);
}

TEST(Split, KeepsOneOnEachSide) {
    const auto [train, val] = split_dataset(numbered(2), 0.8, 1);
    EXPECT_EQ(train.size(), 1u);
    EXPECT_EQ(val.size(), 1u);
    EXPECT_EQ(split_dataset(numbered(10), 0.01, 1).first.size(), 1u);
    EXPECT_EQ(split_dataset(numbered(10), 0.99, 1).second.size(), 1u);
}

TEST(Split, Errors) {
    EXPECT_THROW(split_dataset(numbered(1), 0.8, 1), DataError);
    EXPECT_THROW(split_dataset(numbered(0), 0.8, 1), DataError);
    EXPECT_THROW(split_dataset(numbered(10), 0.0, 1), ConfigError);
    EXPECT_THROW(split_dataset(numbered(10), 1.0, 1), ConfigError);
}

TEST(Synth, ReproducibleAndIndexAddressable) {
    const auto a = synth_generate(3, 64, 9);
    const auto b = synth_generate(3, 64, 9);
    for (int i = 0; i < 3; ++i) {
        EXPECT_TRUE(same_pixels(a[i].image, b[i].image));
        EXPECT_TRUE(same_pixels(a[i].mask, b[i].mask));
        EXPECT_TRUE(same_pixels(synth_sample(i, 64, 9).image, a[i].image));
    }
    EXPECT_FALSE(same_pixels(a[0].image, a[1].image));
    EXPECT_FALSE(same_pixels(synth_generate(1, 64, 10)[0].image, a[0].image));
}

TEST(Synth, BinaryMasksWithReasonableCoverage) {
    for (const auto& p : synth_generate(6, 64, 1)) {
        ASSERT_EQ(p.image.type(), CV_8UC3);
        ASSERT_EQ(p.mask.type(), CV_8UC1);
        ASSERT_EQ(p.image.size(), cv::Size(64, 64));
        int fg = 0;
        for (int y = 0; y < 64; ++y) {
            for (int x = 0; x < 64; ++x) {
                const uchar v = p.mask.at<uchar>(y, x);
                ASSERT_TRUE(v == 0 || v == 255);
                fg += v ? 1 : 0;
            }
        }
        const double fraction = fg / 4096.0;
        EXPECT_GT(fraction, 0.05) << p.id;
        EXPECT_LT(fraction, 0.6) << p.id;
    }
}

TEST(Synth, RejectsBadArguments) {
    EXPECT_THROW(synth_generate(-1, 64, 1), ConfigError);
    EXPECT_THROW(synth_generate(1, 48, 1), ConfigError);
    EXPECT_TRUE(synth_generate(0, 64, 1).empty());
}

TEST(Batches, ShapesNormalizationAndTargets) {
    const auto pairs = synth_generate(3, 64, 2);
    std::vector<const SamplePair*> ptrs{&pairs[0], &pairs[1], &pairs[2]};
    Rng rng(1);
    const auto batch = make_training_batch(ptrs, AugmentSpec{}, 32, 32, rng);
    EXPECT_EQ(batch.x_aug.shape(), (Shape{3, 3, 32, 32}));
    EXPECT_EQ(batch.x_orig.shape(), (Shape{3, 3, 32, 32}));
    EXPECT_EQ(batch.target.shape(), (Shape{3, 1, 32, 32}));
    for (float v : batch.x_orig.storage()) {
        ASSERT_GE(v, -1.0f);
        ASSERT_LE(v, 1.0f);
    }
    for (float v : batch.target.storage()) ASSERT_TRUE(v == 0.0f || v == 1.0f);
    EXPECT_NE(batch.x_aug.storage(), batch.x_orig.storage());
}

TEST(Batches, NoAugmentationMeansIdenticalStreams) {
    const auto pairs = synth_generate(2, 32, 2);
    std::vector<const SamplePair*> ptrs{&pairs[0], &pairs[1]};
    Rng rng(1);
    const auto train = make_training_batch(ptrs, AugmentSpec::none(), 32, 32, rng);
    EXPECT_EQ(train.x_aug.storage(), train.x_orig.storage());
    const auto eval = make_eval_batch(ptrs, 32, 32);
    EXPECT_EQ(eval.x_orig.storage(), train.x_orig.storage());
    EXPECT_EQ(eval.x_aug.storage(), eval.x_orig.storage());
    EXPECT_EQ(eval.target.storage(), train.target.storage());
}

TEST(Batches, PixelNormalization) {
    cv::Mat img(32, 32, CV_8UC3, cv::Scalar(0, 255, 51));
    const auto t = image_to_tensor(img, 32, 32);
    EXPECT_FLOAT_EQ(t.at(0, 0, 5, 5), -1.0f);
    EXPECT_FLOAT_EQ(t.at(0, 1, 5, 5), 1.0f);
    EXPECT_NEAR(t.at(0, 2, 5, 5), -0.6f, 1e-6f);
    EXPECT_THROW(image_to_tensor(cv::Mat(4, 4, CV_8UC1), 32, 32), InputError);
}

TEST(ResizeMask, StaysBinary) {
    const auto p = synth_sample(0, 64, 4);
    for (const auto& [h, w] : {std::pair{32, 32}, std::pair{100, 77}, std::pair{13, 200}}) {
        const cv::Mat m = resize_mask(p.mask, h, w);
        ASSERT_EQ(m.size(), cv::Size(w, h));
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) ASSERT_TRUE(m.at<uchar>(y, x) == 0 || m.at<uchar>(y, x) == 255);
        }
    }
}

TEST(MaskLabels, MapsToZeroOne) {
    cv::Mat m(2, 2, CV_8UC1, cv::Scalar(0));
    m.at<uchar>(0, 1) = 255;
    m.at<uchar>(1, 0) = 255;
    EXPECT_EQ(mask_labels(m), (std::vector<std::uint8_t>{0, 1, 1, 0}));
}
