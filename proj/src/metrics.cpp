#include "tcseg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace tcseg {

std::vector<Segment> to_segments(const std::vector<int>& labels) {
    if (labels.empty()) throw std::invalid_argument("to_segments: empty label sequence");
    std::vector<Segment> segs;
    int start = 0;
    for (size_t t = 1; t <= labels.size(); ++t) {
        if (t == labels.size() || labels[t] != labels[static_cast<size_t>(start)]) {
            segs.push_back({labels[static_cast<size_t>(start)], start, static_cast<int>(t)});
            start = static_cast<int>(t);
        }
    }
    return segs;
}

double frame_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("frame_accuracy: length mismatch, " +
                                    std::to_string(pred.size()) + " vs " +
                                    std::to_string(truth.size()));
    if (pred.empty()) throw std::invalid_argument("frame_accuracy: empty sequences");
    long hits = 0;
    for (size_t t = 0; t < pred.size(); ++t) hits += pred[t] == truth[t];
    return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace {

// Standard two-row Levenshtein DP at unit costs.
int levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] != b[j - 1]);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

std::vector<int> segment_labels(const std::vector<Segment>& segs) {
    std::vector<int> out;
    out.reserve(segs.size());
    for (const Segment& s : segs) out.push_back(s.label);
    return out;
}

double interval_iou(const Segment& a, const Segment& b) {
    const int inter = std::min(a.end, b.end) - std::max(a.start, b.start);
    if (inter <= 0) return 0.0;
    const int uni = std::max(a.end, b.end) - std::min(a.start, b.start);
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double edit_score(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("edit_score: length mismatch");
    const std::vector<int> sp = segment_labels(to_segments(pred));
    const std::vector<int> st = segment_labels(to_segments(truth));
    const int dist = levenshtein(sp, st);
    const double denom = static_cast<double>(std::max(sp.size(), st.size()));
    return 100.0 * (1.0 - static_cast<double>(dist) / denom);
}

double f1_at(const std::vector<int>& pred, const std::vector<int>& truth, double threshold) {
    if (pred.size() != truth.size()) throw std::invalid_argument("f1_at: length mismatch");
    if (threshold <= 0.0 || threshold >= 1.0)
        throw std::invalid_argument("f1_at: threshold must be in (0,1)");
    const std::vector<Segment> ps = to_segments(pred);
    const std::vector<Segment> ts = to_segments(truth);

    std::vector<bool> matched(ts.size(), false);
    int tp = 0, fp = 0;
    for (const Segment& p : ps) {
        int best = -1;
        double best_iou = 0.0;
        for (size_t i = 0; i < ts.size(); ++i) {
            if (matched[i] || ts[i].label != p.label) continue;
            const double iou = interval_iou(p, ts[i]);
            if (iou > best_iou) {
                best_iou = iou;
                best = static_cast<int>(i);
            }
        }
        if (best >= 0 && best_iou > threshold) {
            ++tp;
            matched[static_cast<size_t>(best)] = true;
        } else {
            ++fp;
        }
    }
    const int fn = static_cast<int>(ts.size()) - tp;
    if (tp == 0) return 0.0;
    const double precision = static_cast<double>(tp) / (tp + fp);
    const double recall = static_cast<double>(tp) / (tp + fn);
    return 100.0 * 2.0 * precision * recall / (precision + recall);
}

MetricsReport evaluate(const std::vector<int>& pred, const std::vector<int>& truth) {
    MetricsReport r;
    r.frame_acc = frame_accuracy(pred, truth);
    r.edit = edit_score(pred, truth);
    r.f1_10 = f1_at(pred, truth, 0.10);
    r.f1_25 = f1_at(pred, truth, 0.25);
    r.f1_50 = f1_at(pred, truth, 0.50);
    return r;
}

MetricsReport aggregate(const std::vector<MetricsReport>& reports,
                        const std::vector<long>& frame_counts) {
    if (reports.empty()) throw std::invalid_argument("aggregate: empty report list");
    if (reports.size() != frame_counts.size())
        throw std::invalid_argument("aggregate: frame count list mismatch");
    MetricsReport out;
    long total_frames = 0;
    for (size_t i = 0; i < reports.size(); ++i) {
        out.frame_acc += reports[i].frame_acc * static_cast<double>(frame_counts[i]);
        out.edit += reports[i].edit;
        out.f1_10 += reports[i].f1_10;
        out.f1_25 += reports[i].f1_25;
        out.f1_50 += reports[i].f1_50;
        total_frames += frame_counts[i];
    }
    if (total_frames <= 0) throw std::invalid_argument("aggregate: zero total frames");
    const double n = static_cast<double>(reports.size());
    out.frame_acc /= static_cast<double>(total_frames);
    out.edit /= n;
    out.f1_10 /= n;
    out.f1_25 /= n;
    out.f1_50 /= n;
    return out;
}

std::string format_report(const MetricsReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "acc=%.2f\nedit=%.2f\nf1_10=%.2f\nf1_25=%.2f\nf1_50=%.2f\n", r.frame_acc,
                  r.edit, r.f1_10, r.f1_25, r.f1_50);
    return buf;
}

}  // namespace tcseg
