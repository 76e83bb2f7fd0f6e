#include "dekan/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <set>

#include "dekan/error.hpp"

namespace fs = std::filesystem;

namespace dekan {

AugmentSpec AugmentSpec::none() {
    AugmentSpec s;
    s.brightness_limit = 0;
    s.contrast_limit = 0;
    s.blur_min = 1;
    s.blur_max = 1;
    s.hue_shift_limit = 0;
    s.sat_shift_limit = 0;
    s.val_shift_limit = 0;
    return s;
}

void AugmentSpec::validate() const {
    if (brightness_limit < 0 || contrast_limit < 0 || hue_shift_limit < 0 || sat_shift_limit < 0 ||
        val_shift_limit < 0) {
        throw ConfigError("augmentation limits must be non-negative");
    }
    if (blur_min < 1 || blur_max < blur_min || blur_min % 2 == 0 || blur_max % 2 == 0) {
        throw ConfigError("blur kernel range must be odd sizes with min <= max");
    }
    if (!(probability >= 0 && probability <= 1)) throw ConfigError("augmentation probability must be in [0, 1]");
}

// ---------------------------------------------------------------- ingestion

namespace {

std::map<std::string, fs::path> png_files(const fs::path& dir) {
    std::map<std::string, fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            out.emplace(entry.path().stem().string(), entry.path());
        }
    }
    return out;
}

std::string join(const std::vector<std::string>& ids) {
    std::string s;
    for (const auto& id : ids) s += (s.empty() ? "" : ", ") + id;
    return s;
}

cv::Mat binarize(const cv::Mat& gray) {
    cv::Mat out;
    cv::threshold(gray, out, 127, 255, cv::THRESH_BINARY);
    return out;
}

}  // namespace

std::vector<SamplePair> load_dataset(const fs::path& root) {
    const auto images = png_files(root / "images");
    const auto masks = png_files(root / "masks");
    std::vector<std::string> orphan_images, orphan_masks;
    for (const auto& [id, _] : images) {
        if (!masks.count(id)) orphan_images.push_back(id);
    }
    for (const auto& [id, _] : masks) {
        if (!images.count(id)) orphan_masks.push_back(id);
    }
    if (!orphan_images.empty() || !orphan_masks.empty()) {
        std::string msg = "dataset " + root.string() + ":";
        if (!orphan_images.empty()) msg += " images without masks: " + join(orphan_images) + ";";
        if (!orphan_masks.empty()) msg += " masks without images: " + join(orphan_masks) + ";";
        throw DataError(msg);
    }
    std::vector<SamplePair> out;
    for (const auto& [id, image_path] : images) {
        SamplePair p{id, cv::imread(image_path.string(), cv::IMREAD_COLOR),
                     cv::imread(masks.at(id).string(), cv::IMREAD_GRAYSCALE)};
        if (p.image.empty()) throw DataError("cannot read image " + image_path.string());
        if (p.mask.empty()) throw DataError("cannot read mask " + masks.at(id).string());
        if (p.image.size() != p.mask.size()) {
            throw DataError("sample " + id + ": image is " + std::to_string(p.image.cols) + "x" +
                            std::to_string(p.image.rows) + " but mask is " + std::to_string(p.mask.cols) + "x" +
                            std::to_string(p.mask.rows));
        }
        p.mask = binarize(p.mask);
        out.push_back(std::move(p));
    }
    return out;
}

void save_dataset(const std::vector<SamplePair>& pairs, const fs::path& root) {
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 3};
    for (const auto& p : pairs) {
        if (!cv::imwrite((root / "images" / (p.id + ".png")).string(), p.image, params) ||
            !cv::imwrite((root / "masks" / (p.id + ".png")).string(), p.mask, params)) {
            throw DataError("cannot write sample " + p.id + " under " + root.string());
        }
    }
}

// ---------------------------------------------------------------- augmentation

cv::Mat augment(const cv::Mat& image, const AugmentSpec& spec, Rng& rng) {
    spec.validate();
    if (image.type() != CV_8UC3) throw InputError("augment expects an 8-bit 3-channel image");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto symmetric = [&](double limit) { return limit > 0 ? (2.0 * unit(rng) - 1.0) * limit : 0.0; };
    auto fires = [&] { return unit(rng) < spec.probability; };

    cv::Mat out = image.clone();
    if (fires()) {
        const double alpha = 1.0 + symmetric(spec.contrast_limit);
        const double beta = 255.0 * symmetric(spec.brightness_limit);
        if (alpha != 1.0 || beta != 0.0) out.convertTo(out, CV_8U, alpha, beta);
    }
    if (fires()) {
        const int choices = (spec.blur_max - spec.blur_min) / 2 + 1;
        const int k = spec.blur_min + 2 * static_cast<int>(std::min<double>(choices - 1, unit(rng) * choices));
        if (k > 1) cv::GaussianBlur(out, out, cv::Size(k, k), 0.0);
    }
    if (fires()) {
        const double hue = symmetric(spec.hue_shift_limit);
        const double sat = symmetric(spec.sat_shift_limit);
        const double val = symmetric(spec.val_shift_limit);
        if (hue != 0.0 || sat != 0.0 || val != 0.0) {
            cv::Mat hsv;
            cv::cvtColor(out, hsv, cv::COLOR_BGR2HSV);
            // 8-bit OpenCV hue is degrees / 2 in [0, 180).
            const int dh = static_cast<int>(std::lround(hue / 2.0));
            for (int y = 0; y < hsv.rows; ++y) {
                auto* px = hsv.ptr<cv::Vec3b>(y);
                for (int x = 0; x < hsv.cols; ++x) {
                    px[x][0] = static_cast<uchar>(((px[x][0] + dh) % 180 + 180) % 180);
                    px[x][1] = cv::saturate_cast<uchar>(px[x][1] + sat);
                    px[x][2] = cv::saturate_cast<uchar>(px[x][2] + val);
                }
            }
            cv::cvtColor(hsv, out, cv::COLOR_HSV2BGR);
        }
    }
    return out;
}

// ---------------------------------------------------------------- split

std::pair<std::vector<SamplePair>, std::vector<SamplePair>> split_dataset(const std::vector<SamplePair>& pairs,
                                                                          double train_fraction,
                                                                          std::uint64_t seed) {
    if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("train fraction must lie in (0, 1)");
    const auto n = pairs.size();
    if (n < 2) throw DataError("cannot split " + std::to_string(n) + " sample(s) into train and validation sets");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    auto n_train = static_cast<std::size_t>(std::lround(static_cast<double>(n) * train_fraction));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    std::pair<std::vector<SamplePair>, std::vector<SamplePair>> out;
    for (std::size_t i = 0; i < n; ++i) (i < n_train ? out.first : out.second).push_back(pairs[order[i]]);
    return out;
}

// ---------------------------------------------------------------- synthetic data

namespace {

struct Ellipse {
    double cx, cy, ax, ay, angle, brightness;

    bool contains(double x, double y) const {
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = ((x - cx) * c + (y - cy) * s) / ax;
        const double v = (-(x - cx) * s + (y - cy) * c) / ay;
        return u * u + v * v <= 1.0;
    }
    // 1 at the center, 0 on the boundary.
    double depth(double x, double y) const {
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = ((x - cx) * c + (y - cy) * s) / ax;
        const double v = (-(x - cx) * s + (y - cy) * c) / ay;
        return 1.0 - std::min(1.0, u * u + v * v);
    }
};

}  // namespace

SamplePair synth_sample(int index, int size, std::uint64_t seed) {
    if (size < 32 || size % 32 != 0) throw ConfigError("synthetic image size must be a positive multiple of 32");
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index)};
    Rng rng(seq);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    std::normal_distribution<double> noise(0.0, 1.0);
    const double s = size;

    std::vector<Ellipse> teeth;
    for (int jaw = 0; jaw < 2; ++jaw) {
        const int count = 6 + static_cast<int>(u(rng) * 4);
        const double occlusal = s * (jaw == 0 ? range(0.44, 0.48) : range(0.52, 0.56));
        const double left = s * range(0.12, 0.18), right = s * range(0.82, 0.88);
        const double pitch = (right - left) / count;
        const double curve = s * range(0.04, 0.10);
        for (int t = 0; t < count; ++t) {
            const double cx = left + pitch * (t + 0.5) + pitch * range(-0.1, 0.1);
            const double rel = (cx - s / 2) / (s / 2);
            const double line = occlusal - curve * rel * rel;  // both arcs bend upward at the ends
            const double ay = s * range(0.09, 0.13);
            const double ax = pitch * range(0.50, 0.62);
            const double cy = jaw == 0 ? line - ay * 0.85 : line + ay * 0.85;
            teeth.push_back({cx, cy, ax, ay, rel * 0.3 + range(-0.08, 0.08), range(170, 215)});
        }
    }

    const double fx = range(1.5, 3.5) * std::numbers::pi / s, fy = range(1.5, 3.5) * std::numbers::pi / s;
    const double phase = range(0, 2 * std::numbers::pi);
    const double bg = range(35, 55);
    const std::array<double, 3> tint{range(-4, 4), range(-4, 4), range(-4, 4)};

    SamplePair p{"", cv::Mat(size, size, CV_8UC3), cv::Mat(size, size, CV_8UC1, cv::Scalar(0))};
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04d", index);
    p.id = id;
    for (int y = 0; y < size; ++y) {
        auto* img = p.image.ptr<cv::Vec3b>(y);
        auto* msk = p.mask.ptr<uchar>(y);
        for (int x = 0; x < size; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            const double jaw_glow = 25.0 * std::exp(-std::pow((py - s / 2) / (0.22 * s), 2));
            double v = bg + jaw_glow + 8.0 * std::sin(fx * px + phase) * std::cos(fy * py);
            double tooth = 0.0;
            for (const auto& e : teeth) {
                if (e.contains(px, py)) {
                    msk[x] = 255;
                    tooth = std::max(tooth, e.brightness * (0.85 + 0.15 * e.depth(px, py)));
                }
            }
            if (tooth > 0) v = tooth;
            v += 6.0 * noise(rng);
            for (int c = 0; c < 3; ++c) img[x][c] = cv::saturate_cast<uchar>(v + tint[c]);
        }
    }
    return p;
}

std::vector<SamplePair> synth_generate(int count, int image_size, std::uint64_t seed) {
    if (count < 0) throw ConfigError("sample count must be non-negative");
    std::vector<SamplePair> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(synth_sample(i, image_size, seed));
    return out;
}

// ---------------------------------------------------------------- batches

namespace {

cv::Mat resize_image(const cv::Mat& image, int height, int width) {
    if (image.rows == height && image.cols == width) return image;
    cv::Mat out;
    cv::resize(image, out, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
    return out;
}

void write_image(const cv::Mat& image, float* dst, int height, int width) {
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (int y = 0; y < height; ++y) {
        const auto* px = image.ptr<cv::Vec3b>(y);
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                dst[c * plane + static_cast<std::size_t>(y) * width + x] = (px[x][c] / 255.0f - 0.5f) / 0.5f;
            }
        }
    }
}

void write_mask(const cv::Mat& mask, float* dst) {
    for (int y = 0; y < mask.rows; ++y) {
        const auto* px = mask.ptr<uchar>(y);
        for (int x = 0; x < mask.cols; ++x) dst[static_cast<std::size_t>(y) * mask.cols + x] = px[x] ? 1.0f : 0.0f;
    }
}

TrainingBatch assemble(std::span<const SamplePair* const> pairs, const AugmentSpec* spec, int height, int width,
                       Rng* rng) {
    const int b = static_cast<int>(pairs.size());
    TrainingBatch batch{Tensor<float>({b, 3, height, width}), Tensor<float>({b, 3, height, width}),
                        Tensor<float>({b, 1, height, width})};
    const std::size_t img_stride = static_cast<std::size_t>(3) * height * width;
    for (int i = 0; i < b; ++i) {
        const cv::Mat orig = resize_image(pairs[i]->image, height, width);
        write_image(orig, batch.x_orig.data() + i * img_stride, height, width);
        if (spec) {
            write_image(augment(orig, *spec, *rng), batch.x_aug.data() + i * img_stride, height, width);
        } else {
            write_image(orig, batch.x_aug.data() + i * img_stride, height, width);
        }
        write_mask(resize_mask(pairs[i]->mask, height, width),
                   batch.target.data() + static_cast<std::size_t>(i) * height * width);
    }
    return batch;
}

}  // namespace

cv::Mat resize_mask(const cv::Mat& mask, int height, int width) {
    if (mask.rows == height && mask.cols == width) return mask;
    cv::Mat out;
    cv::resize(mask, out, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
    return out;
}

std::vector<std::uint8_t> mask_labels(const cv::Mat& mask) {
    std::vector<std::uint8_t> out;
    out.reserve(mask.total());
    for (int y = 0; y < mask.rows; ++y) {
        const auto* px = mask.ptr<uchar>(y);
        for (int x = 0; x < mask.cols; ++x) out.push_back(px[x] ? 1 : 0);
    }
    return out;
}

TrainingBatch make_training_batch(std::span<const SamplePair* const> pairs, const AugmentSpec& spec, int height,
                                  int width, Rng& rng) {
    return assemble(pairs, &spec, height, width, &rng);
}

TrainingBatch make_eval_batch(std::span<const SamplePair* const> pairs, int height, int width) {
    return assemble(pairs, nullptr, height, width, nullptr);
}

Tensor<float> image_to_tensor(const cv::Mat& image, int height, int width) {
    if (image.type() != CV_8UC3) throw InputError("expected an 8-bit 3-channel image");
    Tensor<float> t({1, 3, height, width});
    write_image(resize_image(image, height, width), t.data(), height, width);
    return t;
}

}  // namespace dekan
