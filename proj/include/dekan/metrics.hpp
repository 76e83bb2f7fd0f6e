#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dekan {

/// One-vs-rest pixel tallies for each of `classes` labels.
struct ConfusionCounts {
    int classes = 2;
    std::vector<std::uint64_t> tp, fp, fn, tn;

    explicit ConfusionCounts(int classes = 2);

    std::uint64_t total(int c) const { return tp[c] + fp[c] + fn[c] + tn[c]; }
    ConfusionCounts& operator+=(const ConfusionCounts& other);
    bool operator==(const ConfusionCounts&) const = default;
};

/// Tallies via a single pass over the (target, prediction) joint histogram.
/// Labels must lie in [0, classes).
ConfusionCounts confusion_counts(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target,
                                 int classes = 2);

struct MetricReport {
    double miou = 0.0;
    double dice = 0.0;
    double accuracy = 0.0;
    double recall = 0.0;
};

/// mIoU averages TP/(TP+FP+FN) over all classes; dice, accuracy and recall are
/// for `foreground`. A class absent from both prediction and target scores 1
/// wherever its denominator vanishes; otherwise a zero denominator scores 0.
MetricReport compute_metrics(const ConfusionCounts& counts, int foreground = 1);

}  // namespace dekan
