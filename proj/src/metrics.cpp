#include "stepcount/metrics.hpp"

#include <algorithm>

#include "stepcount/error.hpp"
#include "stepcount/ingest.hpp"
#include "stepcount/log.hpp"

namespace stepcount::metrics {

namespace {

using Times = std::vector<double>;

std::int64_t count_in(const Times& xs, double lo, double hi, bool closed)
{
    const auto first = std::lower_bound(xs.begin(), xs.end(), lo);
    const auto last = closed ? std::upper_bound(first, xs.end(), hi) : std::lower_bound(first, xs.end(), hi);
    return last - first;
}

void add(EventCounts& acc, EventCounts e)
{
    acc.under += e.under;
    acc.over += e.over;
}

void require_truth(const SegmentEval& eval)
{
    if (eval.ground_truth.empty()) fail(Errc::EmptyGroundTruth, "segment " + eval.segment + " has no ground-truth steps");
}

}  // namespace

void SegmentEval::validate() const
{
    if (!(span_start <= span_end)) fail(Errc::OrderViolation, "segment " + segment + " span ends before it starts");
    for (const Times* xs : {&ground_truth, &predicted}) {
        if (!std::is_sorted(xs->begin(), xs->end())) fail(Errc::OrderViolation, "segment " + segment + " times are unordered");
        if (!xs->empty() && (xs->front() < span_start || xs->back() > span_end)) {
            fail(Errc::OutOfSpan, "segment " + segment + " has a time outside [" + ingest::format_double(span_start) +
                                      ", " + ingest::format_double(span_end) + "]");
        }
    }
}

EventCounts score_interval(std::int64_t k)
{
    if (k == 0) return {1, 0};
    return {0, k - 1};
}

Metric1Breakdown metric1_breakdown(const SegmentEval& eval, Metric1Mode mode)
{
    require_truth(eval);
    eval.validate();
    const auto& T = eval.ground_truth;
    const auto& P = eval.predicted;
    Metric1Breakdown out;
    for (std::size_t i = 0; i + 1 < T.size(); ++i) add(out.counts, score_interval(count_in(P, T[i], T[i + 1], false)));
    if (mode == Metric1Mode::ExtendToSpan) {
        const auto tail = score_interval(count_in(P, T.back(), eval.span_end, true));
        out.tail_under = tail.under;
        add(out.counts, tail);
        out.pre_first_overcount = count_in(P, eval.span_start, T.front(), false);
        out.counts.over += out.pre_first_overcount;
    }
    return out;
}

EventCounts metric1(const SegmentEval& eval, Metric1Mode mode) { return metric1_breakdown(eval, mode).counts; }

EventCounts metric2(const SegmentEval& eval)
{
    require_truth(eval);
    eval.validate();
    const auto& T = eval.ground_truth;
    EventCounts out;
    double lo = eval.span_start;
    for (std::size_t i = 0; i < T.size(); ++i) {
        const bool last = i + 1 == T.size();
        const double hi = last ? eval.span_end : 0.5 * (T[i] + T[i + 1]);
        add(out, score_interval(count_in(eval.predicted, lo, hi, last)));
        lo = hi;
    }
    return out;
}

EventCounts metric3(const SegmentEval& eval)
{
    const auto g = static_cast<std::int64_t>(eval.ground_truth.size());
    const auto p = static_cast<std::int64_t>(eval.predicted.size());
    if (g > p) return {g - p, 0};
    return {0, p - g};
}

StepErrorReport aggregate(std::span<const SegmentEval> evals, std::span<const AccuracySample> accuracies,
                          Metric1Mode mode)
{
    StepErrorReport r;
    for (const auto& e : evals) {
        if (e.ground_truth.empty()) {
            log::info("segment ", e.segment, " has no ground-truth steps and is excluded from the metrics");
            ++r.skipped_segments;
            continue;
        }
        const auto m1 = metric1_breakdown(e, mode);
        const EventCounts per[3] = {m1.counts, metric2(e), metric3(e)};
        for (std::size_t m = 0; m < 3; ++m) {
            r.metric[m].under_events += per[m].under;
            r.metric[m].over_events += per[m].over;
        }
        r.metric1_pre_first_overcount += m1.pre_first_overcount;
        r.metric1_tail_undercount += m1.tail_under;
        r.total_steps += static_cast<std::int64_t>(e.ground_truth.size());
        r.total_predicted += static_cast<std::int64_t>(e.predicted.size());
        ++r.segments;
    }
    if (r.segments == 0) fail(Errc::NoValidSegments, "no evaluated segment has a ground-truth step");
    for (auto& m : r.metric) {
        m.under_rate = static_cast<double>(m.under_events) / static_cast<double>(r.total_steps);
        m.over_rate = static_cast<double>(m.over_events) / static_cast<double>(r.total_steps);
    }

    double weighted = 0.0;
    for (const auto& a : accuracies) {
        weighted += a.accuracy * static_cast<double>(a.samples);
        r.accuracy_samples += a.samples;
    }
    if (r.accuracy_samples > 0) r.signal_accuracy = weighted / static_cast<double>(r.accuracy_samples);
    return r;
}

}  // namespace stepcount::metrics
