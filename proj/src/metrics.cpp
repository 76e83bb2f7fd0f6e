#include "dekan/metrics.hpp"

#include <algorithm>
#include <string>

#include "dekan/error.hpp"
#include "dekan/losses.hpp"

namespace dekan {

ConfusionCounts::ConfusionCounts(int c) : classes(c), tp(c, 0), fp(c, 0), fn(c, 0), tn(c, 0) {
    if (c < 1) throw ConfigError("confusion counts need at least one class");
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
    if (other.classes != classes) throw ConfigError("cannot merge confusion counts with different class counts");
    for (int c = 0; c < classes; ++c) {
        tp[c] += other.tp[c];
        fp[c] += other.fp[c];
        fn[c] += other.fn[c];
        tn[c] += other.tn[c];
    }
    return *this;
}

ConfusionCounts confusion_counts(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target,
                                 int classes) {
    if (pred.size() != target.size()) {
        throw InputError("prediction has " + std::to_string(pred.size()) + " pixels, target has " +
                         std::to_string(target.size()));
    }
    ConfusionCounts counts(classes);
    const auto c = static_cast<std::size_t>(classes);
    std::vector<std::uint64_t> joint(c * c, 0);  // [target][pred]
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] >= classes || target[i] >= classes) {
            throw InputError("label " + std::to_string(std::max(pred[i], target[i])) + " out of range for " +
                             std::to_string(classes) + " classes");
        }
        ++joint[target[i] * c + pred[i]];
    }
    const auto n = static_cast<std::uint64_t>(pred.size());
    for (std::size_t k = 0; k < c; ++k) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t j = 0; j < c; ++j) {
            row += joint[k * c + j];
            col += joint[j * c + k];
        }
        counts.tp[k] = joint[k * c + k];
        counts.fn[k] = row - counts.tp[k];
        counts.fp[k] = col - counts.tp[k];
        counts.tn[k] = n - row - counts.fp[k];
    }
    return counts;
}

namespace {

double ratio_or_tie(std::uint64_t num, std::uint64_t den, bool absent_everywhere) {
    if (den == 0) return absent_everywhere ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricReport compute_metrics(const ConfusionCounts& counts, int foreground) {
    if (foreground < 0 || foreground >= counts.classes) throw ConfigError("foreground class out of range");
    MetricReport r;
    double iou_sum = 0.0;
    for (int c = 0; c < counts.classes; ++c) {
        const bool absent = counts.tp[c] + counts.fp[c] + counts.fn[c] == 0;
        iou_sum += ratio_or_tie(counts.tp[c], counts.tp[c] + counts.fp[c] + counts.fn[c], absent);
    }
    r.miou = iou_sum / counts.classes;
    const int f = foreground;
    const bool absent = counts.tp[f] + counts.fp[f] + counts.fn[f] == 0;
    r.recall = ratio_or_tie(counts.tp[f], counts.tp[f] + counts.fn[f], absent);
    r.accuracy = ratio_or_tie(counts.tp[f] + counts.tn[f], counts.total(f), true);
    r.dice = (2.0 * static_cast<double>(counts.tp[f]) + kDiceSmoothing) /
             (2.0 * static_cast<double>(counts.tp[f]) + static_cast<double>(counts.fp[f] + counts.fn[f]) +
              kDiceSmoothing);
    return r;
}

}  // namespace dekan
