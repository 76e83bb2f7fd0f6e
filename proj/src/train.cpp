#include "dekan/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <ostream>
#include <sstream>

#include "dekan/error.hpp"
#include "dekan/losses.hpp"

namespace fs = std::filesystem;

namespace dekan {

void TrainConfig::validate() const {
    // lr == min_lr == 0 is accepted so a run can be frozen.
    const bool frozen = lr == 0 && min_lr == 0;
    if (!frozen && !(lr > min_lr && min_lr > 0)) {
        throw ConfigError("learning rates must satisfy lr > min_lr > 0 (or both 0 for a frozen run)");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
    if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
    if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
    if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("train_fraction must lie in (0, 1)");
    model.validate();
    augment.validate();
}

std::string format_log(const std::vector<EpochLog>& log) {
    std::string out = "epoch,lr,train_loss,val_loss,val_dice,train_dice\n";
    char buf[256];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.lr, e.train_loss, e.val_loss,
                      e.val_dice, e.train_dice);
        out += buf;
    }
    return out;
}

namespace {

std::vector<const SamplePair*> pointers(const std::vector<SamplePair>& samples) {
    std::vector<const SamplePair*> out;
    for (const auto& s : samples) out.push_back(&s);
    return out;
}

std::string rng_text(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<SamplePair>& train_set,
                  const std::vector<SamplePair>& val_set, std::ostream* progress) {
    config.validate();
    if (train_set.empty() || val_set.empty()) throw DataError("training needs non-empty train and validation sets");
    Dekan<float> model(config.model);
    if (!config.import_weights.empty()) import_residual_weights(config.import_weights, model);
    Sgd<float> optimizer(config.momentum, config.weight_decay);
    EarlyStopping stopper(config.early_stop_patience);
    Rng rng(config.seed);
    Rng aug_rng(config.augment.seed);
    const int h = config.model.image_h, w = config.model.image_w;

    TrainResult result;
    std::vector<std::size_t> order(train_set.size());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, config.epochs, config.lr, config.min_lr);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        const auto bs = static_cast<std::size_t>(config.batch_size);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            std::size_t end = std::min(order.size(), start + bs);
            // A trailing single sample joins this batch: batch norm cannot train on
            // one value per channel (1x1 bottleneck maps).
            if (order.size() - end == 1) end = order.size();
            std::vector<const SamplePair*> batch_pairs;
            for (std::size_t i = start; i < end; ++i) batch_pairs.push_back(&train_set[order[i]]);
            const auto batch = make_training_batch(batch_pairs, config.augment, h, w, aug_rng);

            const Tensor<float> logits = model.forward(batch.x_aug, batch.x_orig, true);
            Tensor<float> dlogits;
            const LossValue loss = combined_loss(logits, batch.target, &dlogits);
            if (!std::isfinite(loss.total)) {
                throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(start / bs));
            }
            model.zero_grad();
            model.backward(dlogits);
            optimizer.step(model.state(), lr);
            loss_sum += loss.total * static_cast<double>(end - start);
            seen += end - start;
            if (end == order.size()) break;
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.train_loss = loss_sum / static_cast<double>(seen);
        const EvalReport val = evaluate(model, val_set);
        entry.val_loss = val.loss;
        entry.val_dice = val.overall.dice;
        if (!std::isfinite(entry.val_loss)) {
            throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        entry.train_dice = config.log_train_dice ? evaluate(model, train_set).overall.dice : 0.0;
        result.log.push_back(entry);

        if (stopper.update(entry.val_loss)) {
            result.best = capture_checkpoint(model, &optimizer, epoch, entry.val_loss, rng_text(rng));
        }
        if (progress) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "epoch %4d  lr %.3e  train_loss %.5f  val_loss %.5f  val_dice %.4f%s\n",
                          epoch, lr, entry.train_loss, entry.val_loss, entry.val_dice,
                          config.log_train_dice ? (std::string("  train_dice ") + std::to_string(entry.train_dice)).c_str()
                                                : "");
            *progress << buf << std::flush;
        }
        if (stopper.should_stop()) {
            result.early_stopped = true;
            break;
        }
    }
    result.last = capture_checkpoint(model, &optimizer, result.log.back().epoch, stopper.best(), rng_text(rng));
    return result;
}

TrainResult train(const TrainConfig& config, std::ostream* progress) {
    config.validate();
    const auto pairs = load_dataset(config.data_root);
    if (pairs.empty()) throw DataError("dataset " + config.data_root + " is empty");
    auto [train_set, val_set] = split_dataset(pairs, config.train_fraction, config.seed);
    auto result = train(config, train_set, val_set, progress);
    const fs::path out = config.output_dir;
    fs::create_directories(out);
    save_checkpoint(result.best, out / "best.ckpt");
    save_checkpoint(result.last, out / "last.ckpt");
    write_text(out / "train_log.csv", format_log(result.log));
    return result;
}

// ---------------------------------------------------------------- evaluation

std::string EvalReport::text() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "samples = %zu\nmiou = %.6f\ndice = %.6f\naccuracy = %.6f\nrecall = %.6f\n",
                  samples.size(), overall.miou, overall.dice, overall.accuracy, overall.recall);
    return buf;
}

std::string EvalReport::csv() const {
    std::string out = "id,miou,dice,accuracy,recall\n";
    char buf[256];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f\n", s.id.c_str(), s.metrics.miou, s.metrics.dice,
                      s.metrics.accuracy, s.metrics.recall);
        out += buf;
    }
    return out;
}

EvalReport evaluate(Dekan<float>& model, const std::vector<SamplePair>& samples, double threshold, int batch_size) {
    if (samples.empty()) throw DataError("cannot evaluate on an empty dataset");
    const auto& cfg = model.config();
    for (const auto& s : samples) {
        if (s.image.rows != cfg.image_h || s.image.cols != cfg.image_w) {
            throw ConfigError("sample " + s.id + " is " + std::to_string(s.image.cols) + "x" +
                              std::to_string(s.image.rows) + " but the model expects " + std::to_string(cfg.image_w) +
                              "x" + std::to_string(cfg.image_h));
        }
    }
    EvalReport report;
    const auto ptrs = pointers(samples);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < ptrs.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(ptrs.size(), start + static_cast<std::size_t>(batch_size));
        const auto batch = make_eval_batch(std::span(ptrs).subspan(start, end - start), cfg.image_h, cfg.image_w);
        const Tensor<float> logits = model.forward(batch.x_orig, batch.x_orig, false);
        loss_sum += combined_loss(logits, batch.target).total * static_cast<double>(end - start);
        const auto masks = logits_to_masks(logits, threshold);
        for (std::size_t i = 0; i < masks.size(); ++i) {
            const auto truth = mask_labels(ptrs[start + i]->mask);
            const auto counts = confusion_counts(masks[i].labels, truth, 2);
            report.counts += counts;
            report.samples.push_back({ptrs[start + i]->id, compute_metrics(counts)});
        }
    }
    report.loss = loss_sum / static_cast<double>(samples.size());
    report.overall = compute_metrics(report.counts);
    return report;
}

// ---------------------------------------------------------------- prediction

Prediction predict(Dekan<float>& model, const cv::Mat& image, double threshold) {
    if (image.empty() || image.type() != CV_8UC3) throw InputError("predict expects an 8-bit 3-channel image");
    const auto& cfg = model.config();
    const auto masks = dekan_infer(model, image_to_tensor(image, cfg.image_h, cfg.image_w), threshold);
    cv::Mat small(cfg.image_h, cfg.image_w, CV_8UC1);
    for (int i = 0; i < cfg.image_h * cfg.image_w; ++i) small.data[i] = masks[0].labels[i] ? 255 : 0;
    Prediction p;
    p.mask = resize_mask(small, image.rows, image.cols).clone();
    p.overlay = image.clone();
    constexpr double alpha = 0.4;
    const cv::Vec3d color(0, 0, 255);
    for (int y = 0; y < image.rows; ++y) {
        const auto* m = p.mask.ptr<uchar>(y);
        auto* px = p.overlay.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.cols; ++x) {
            if (!m[x]) continue;
            for (int c = 0; c < 3; ++c) {
                px[x][c] = cv::saturate_cast<uchar>((1 - alpha) * px[x][c] + alpha * color[c]);
            }
        }
    }
    return p;
}

fs::path predict_to_files(Dekan<float>& model, const fs::path& image_path, const fs::path& out_dir,
                          double threshold) {
    const cv::Mat image = cv::imread(image_path.string(), cv::IMREAD_COLOR);
    if (image.empty()) throw DataError("cannot read image " + image_path.string());
    const auto p = predict(model, image, threshold);
    fs::create_directories(out_dir);
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 3};
    const auto stem = image_path.stem().string();
    const auto mask_path = out_dir / (stem + "_mask.png");
    if (!cv::imwrite(mask_path.string(), p.mask, params) ||
        !cv::imwrite((out_dir / (stem + "_overlay.png")).string(), p.overlay, params)) {
        throw DataError("cannot write predictions into " + out_dir.string());
    }
    return mask_path;
}

}  // namespace dekan
