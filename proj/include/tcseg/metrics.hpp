#pragma once

#include <string>
#include <vector>

namespace tcseg {

/// A maximal run of equal frame labels, frames [start, end).
struct Segment {
    int label = 0;
    int start = 0;
    int end = 0;

    int length() const { return end - start; }
    bool operator==(const Segment&) const = default;
};

/// Run-length encoding of a frame label sequence. Concatenating the segments
/// reconstructs the input exactly; adjacent segments have different labels.
std::vector<Segment> to_segments(const std::vector<int>& labels);

/// 100 * (#matching frames) / T.
double frame_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

/// 100 * (1 - Lev(S_pred, S_truth) / max(|S_pred|, |S_truth|)) over the
/// segment label strings, unit insert/delete/substitute costs.
double edit_score(const std::vector<int>& pred, const std::vector<int>& truth);

/// Segmental F1: a predicted segment is a true positive when its temporal IoU
/// with the best not-yet-matched same-label truth segment is strictly greater
/// than `threshold`; predictions are matched greedily in temporal order.
/// F1 = 2PR/(P+R), 0 when P+R = 0.
double f1_at(const std::vector<int>& pred, const std::vector<int>& truth, double threshold);

struct MetricsReport {
    double frame_acc = 0.0;
    double edit = 0.0;
    double f1_10 = 0.0;
    double f1_25 = 0.0;
    double f1_50 = 0.0;

    bool operator==(const MetricsReport&) const = default;
};

MetricsReport evaluate(const std::vector<int>& pred, const std::vector<int>& truth);

/// Frame accuracy is frame-weighted; edit and F1 are unweighted means over
/// the sequences. `frame_counts[i]` is the frame count behind reports[i].
MetricsReport aggregate(const std::vector<MetricsReport>& reports,
                        const std::vector<long>& frame_counts);

/// Serialization used by report files: one `key=value` line per metric,
/// two fractional digits.
std::string format_report(const MetricsReport& r);

}  // namespace tcseg
