#include <doctest.h>

#include "stepcount/error.hpp"
#include "stepcount/metrics.hpp"
#include "stepcount/postprocess.hpp"
#include "test_support.hpp"

using namespace stepcount;
using namespace stepcount::metrics;
using postprocess::PostprocessConfig;

namespace {

Errc code_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::IoFailure;
}

SegmentEval seg(std::vector<double> truth, std::vector<double> pred, double lo, double hi)
{
    return {"s", std::move(truth), std::move(pred), lo, hi};
}

}  // namespace

TEST_CASE("binarize: boundary maps to zero")
{
    const std::vector<double> v{0.49, 0.51, 0.50};
    CHECK(postprocess::binarize(v) == std::vector<std::uint8_t>{0, 1, 0});
    const std::vector<double> high(5, 0.9);
    CHECK(postprocess::binarize(high) == std::vector<std::uint8_t>(5, 1));
    const std::vector<double> one{0.31};
    CHECK(postprocess::binarize(one, PostprocessConfig{0.3, 0}) == std::vector<std::uint8_t>{1});
    CHECK(code_of([] { PostprocessConfig{1.0, 0}.validate(); }) == Errc::InvalidConfig);
}

TEST_CASE("predicted steps from clean and shaky waves")
{
    std::vector<double> times;
    for (int i = 0; i < 15; ++i) times.push_back(0.1 * i);
    std::vector<double> clean;
    for (int i = 0; i < 15; ++i) clean.push_back(i >= 5 && i < 10 ? 0.9 : 0.1);
    const auto steps = postprocess::predicted_steps(clean, times);
    REQUIRE(steps.size() == 2);
    CHECK(steps[0] == times[5]);
    CHECK(steps[1] == times[10]);

    const std::vector<double> flat(15, 0.9);
    CHECK(postprocess::predicted_steps(flat, times).empty());

    std::vector<double> shaky(15, 0.1);
    for (int i = 5; i < 15; ++i) shaky[i] = i % 2 ? 0.52 : 0.48;
    CHECK(postprocess::predicted_steps(shaky, times).size() > 2);
    // the optional dwell filter absorbs the chatter
    CHECK(postprocess::predicted_steps(shaky, times, PostprocessConfig{0.5, 3}).size() <= 1);
}

TEST_CASE("min dwell keeps long runs")
{
    const std::vector<std::uint8_t> bits{0, 0, 0, 1, 0, 0, 1, 1, 1, 1, 0};
    CHECK(postprocess::apply_min_dwell(bits, 2) == std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 0});
    CHECK(postprocess::apply_min_dwell(bits, 0) == bits);
}

TEST_CASE("signal accuracy")
{
    const std::vector<std::uint8_t> a{0, 1, 1, 0}, b{0, 1, 0, 0}, c{1, 0, 0, 1};
    CHECK(postprocess::signal_accuracy(a, a) == 1.0);
    CHECK(postprocess::signal_accuracy(a, c) == 0.0);
    CHECK(postprocess::signal_accuracy(a, b) == 0.75);
    const std::vector<std::uint8_t> shorter{0, 1};
    CHECK(code_of([&] { postprocess::signal_accuracy(a, shorter); }) == Errc::LengthMismatch);
}

TEST_CASE("property: binarize monotone, steps equal bit changes, accuracy symmetric")
{
    Rng rng(21);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng.index(60);
        std::vector<double> v(n), times(n);
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = rng.bernoulli(0.2) ? 0.5 : rng.uniform();
            times[i] = static_cast<double>(i);
        }
        const auto bits = postprocess::binarize(v);
        auto raised = v;
        const std::size_t k = rng.index(n);
        raised[k] = std::min(1.0, raised[k] + rng.uniform(0.0, 0.5));
        CHECK(postprocess::binarize(raised)[k] >= bits[k]);
        std::size_t changes = 0;
        for (std::size_t i = 1; i < n; ++i) changes += bits[i] != bits[i - 1];
        CHECK(postprocess::predicted_steps(v, times).size() == changes);
        std::vector<std::uint8_t> other(n);
        for (auto& o : other) o = static_cast<std::uint8_t>(rng.bernoulli(0.5));
        CHECK(postprocess::signal_accuracy(bits, other) == postprocess::signal_accuracy(other, bits));
    }
}

TEST_CASE("debug csv")
{
    const std::vector<double> t{0, 1}, raw{0.2, 0.7};
    const std::vector<std::uint8_t> bin{0, 1}, truth{0, 0};
    CHECK(postprocess::to_debug_csv(t, raw, bin, truth) == "t,raw,binary,truth\n0,0.2,0,0\n1,0.7,1,0\n");
}

TEST_CASE("metric 1 example")
{
    const auto e = seg({1, 2, 3}, {1.1, 1.2, 2.5}, 0, 4);
    CHECK(metric1(e) == EventCounts{1, 1});
    const auto perfect = seg({1, 2, 3}, {1, 2, 3}, 0, 4);
    CHECK(metric1(perfect) == EventCounts{0, 0});
    CHECK(metric2(perfect) == EventCounts{0, 0});
    CHECK(metric3(perfect) == EventCounts{0, 0});
}

TEST_CASE("metric 2 forgives early/late predictions that metric 1 penalizes")
{
    const auto e = seg({2, 4}, {2.9, 3.1}, 0, 6);
    CHECK(metric2(e) == EventCounts{0, 0});
    CHECK(metric1(e) == EventCounts{1, 1});
}

TEST_CASE("metric 3 example")
{
    std::vector<double> truth, pred;
    for (int i = 0; i < 10; ++i) truth.push_back(i + 1.0);
    for (int i = 0; i < 7; ++i) pred.push_back(i + 1.5);
    CHECK(metric3(seg(truth, pred, 0, 11)) == EventCounts{3, 0});
    CHECK(metric3(seg(pred, truth, 0, 11)) == EventCounts{0, 3});
}

TEST_CASE("metric 1 boundary handling is reported separately")
{
    const auto e = seg({2, 3}, {0.5, 1.0, 2.5}, 0, 5);
    const auto extend = metric1_breakdown(e, Metric1Mode::ExtendToSpan);
    CHECK(extend.pre_first_overcount == 2);
    CHECK(extend.tail_under == 1);
    CHECK(extend.counts == EventCounts{1, 2});
    CHECK(metric1(e, Metric1Mode::StrictBetweenStrikes) == EventCounts{0, 0});
}

TEST_CASE("alternating-offset fixture")
{
    // predictions alternately late and early around T_i: late ones fall in
    // interval i, early ones in interval i-1
    const auto e = seg({1, 2, 3, 4, 5, 6}, {1.1, 1.9, 3.1, 3.9, 5.1, 5.9}, 0, 6.5);
    const auto strict = metric1(e, Metric1Mode::StrictBetweenStrikes);
    CHECK(strict.over == 3);
    CHECK(strict.under == 2);
    CHECK(metric2(e) == EventCounts{0, 0});
    CHECK(metric3(e) == EventCounts{0, 0});
    // extending to the span adds the empty closing interval
    CHECK(metric1(e) == EventCounts{3, 3});
}

TEST_CASE("metric errors")
{
    CHECK(code_of([] { metric1(seg({}, {1}, 0, 2)); }) == Errc::EmptyGroundTruth);
    CHECK(code_of([] { metric2(seg({}, {1}, 0, 2)); }) == Errc::EmptyGroundTruth);
    CHECK(code_of([] { metric1(seg({1}, {3}, 0, 2)); }) == Errc::OutOfSpan);
    CHECK(code_of([] { metric2(seg({1, 0.5}, {}, 0, 2)); }) == Errc::OrderViolation);
}

TEST_CASE("aggregate")
{
    SUBCASE("two segments with (1,0) and (0,2) over 30 steps")
    {
        std::vector<double> a, b;
        for (int i = 0; i < 15; ++i) a.push_back(i + 1.0);
        for (int i = 0; i < 15; ++i) b.push_back(i + 1.0);
        auto pa = a;
        pa.pop_back();
        auto pb = b;
        pb.push_back(15.2);
        pb.push_back(15.4);
        std::vector<SegmentEval> evals{seg(a, pa, 0, 16), seg(b, pb, 0, 16)};
        const std::vector<AccuracySample> acc{{0.9, 100}, {0.6, 50}};
        const auto r = aggregate(evals, acc);
        CHECK(r.total_steps == 30);
        CHECK(r.metric[2].under_events == 1);
        CHECK(r.metric[2].over_events == 2);
        CHECK(100.0 * r.metric[2].under_rate == doctest::Approx(3.3333).epsilon(1e-4));
        CHECK(100.0 * r.metric[2].over_rate == doctest::Approx(6.6667).epsilon(1e-4));
        CHECK(r.signal_accuracy == doctest::Approx(0.8));
        CHECK(r.accuracy_samples == 150);
    }
    SUBCASE("perfect prediction")
    {
        std::vector<SegmentEval> evals{seg({1, 2, 3}, {1, 2, 3}, 0, 4)};
        const auto r = aggregate(evals, {});
        for (const auto& m : r.metric) {
            CHECK(m.under_rate == 0.0);
            CHECK(m.over_rate == 0.0);
        }
    }
    SUBCASE("segments without steps are skipped")
    {
        std::vector<SegmentEval> evals{seg({}, {1}, 0, 4), seg({1}, {1}, 0, 4)};
        const auto r = aggregate(evals, {});
        CHECK(r.skipped_segments == 1);
        CHECK(r.segments == 1);
        std::vector<SegmentEval> none{seg({}, {1}, 0, 4)};
        CHECK(code_of([&] { aggregate(none, {}); }) == Errc::NoValidSegments);
    }
}

TEST_CASE("property: production metrics equal the linear-scan oracle and metric 3 is dominated")
{
    Rng rng(31);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto e = testsupport::random_segment_eval(rng);
        const auto m1 = metric1(e);
        const auto m2 = metric2(e);
        const auto m3 = metric3(e);
        REQUIRE(m1 == testsupport::brute_metric1(e, false));
        REQUIRE(metric1(e, Metric1Mode::StrictBetweenStrikes) == testsupport::brute_metric1(e, true));
        REQUIRE(m2 == testsupport::brute_metric2(e));
        REQUIRE(m3 == testsupport::brute_metric3(e));
        CHECK(m3.under <= m1.under);
        CHECK(m3.over <= m1.over);
        CHECK(m3.under <= m2.under);
        CHECK(m3.over <= m2.over);
        // metric 2 tiles the span: every prediction lands in exactly one interval
        const auto n = static_cast<std::int64_t>(e.ground_truth.size());
        const auto p = static_cast<std::int64_t>(e.predicted.size());
        CHECK(p == (n - m2.under) + m2.over);
    }
}
