#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stepcount::metrics {

/// Ground truth and predictions for one evaluated slice. Intervals are
/// half-open [lo, hi) except the last, which is closed at span_end.
struct SegmentEval {
    std::string segment;
    std::vector<double> ground_truth;  // T_1..T_N, ordered
    std::vector<double> predicted;     // ordered
    double span_start = 0.0;
    double span_end = 0.0;

    /// Ordering and span containment; raises OrderViolation / OutOfSpan.
    void validate() const;
};

struct EventCounts {
    std::int64_t under = 0;
    std::int64_t over = 0;

    bool operator==(const EventCounts&) const = default;
};

enum class Metric1Mode {
    ExtendToSpan,          // predictions before T_1 overcount; last interval runs to span_end
    StrictBetweenStrikes,  // only [T_i, T_{i+1}) scored; outside predictions ignored
};

struct Metric1Breakdown {
    EventCounts counts;
    std::int64_t pre_first_overcount = 0;  // included in counts.over
    std::int64_t tail_under = 0;           // undercount of [T_N, span_end], included in counts.under
};

/// Scoring rule shared by metrics 1 and 2: k == 0 -> 1 undercount, k >= 2 -> k-1 overcounts.
EventCounts score_interval(std::int64_t k);

Metric1Breakdown metric1_breakdown(const SegmentEval& eval, Metric1Mode mode = Metric1Mode::ExtendToSpan);
EventCounts metric1(const SegmentEval& eval, Metric1Mode mode = Metric1Mode::ExtendToSpan);
EventCounts metric2(const SegmentEval& eval);
EventCounts metric3(const SegmentEval& eval);

struct MetricRates {
    std::int64_t under_events = 0;
    std::int64_t over_events = 0;
    double under_rate = 0.0;  // fractions of total ground-truth steps
    double over_rate = 0.0;

    double combined() const { return under_rate + over_rate; }
};

struct StepErrorReport {
    std::array<MetricRates, 3> metric{};   // metric[0] is metric 1
    std::int64_t total_steps = 0;
    std::int64_t total_predicted = 0;
    double signal_accuracy = 0.0;          // sample-weighted mean
    std::int64_t accuracy_samples = 0;
    std::int64_t segments = 0;             // evaluated (N >= 1)
    std::int64_t skipped_segments = 0;     // N == 0
    std::int64_t metric1_pre_first_overcount = 0;
    std::int64_t metric1_tail_undercount = 0;
};

struct AccuracySample {
    double accuracy = 0.0;
    std::int64_t samples = 0;
};

/// Sums events over segments with at least one ground-truth step and divides
/// by the total step count; raises NoValidSegments when none qualify.
StepErrorReport aggregate(std::span<const SegmentEval> evals, std::span<const AccuracySample> accuracies,
                          Metric1Mode mode = Metric1Mode::ExtendToSpan);

}  // namespace stepcount::metrics
