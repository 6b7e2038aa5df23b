#include <doctest.h>

#include <cmath>
#include <numbers>

#include "stepcount/error.hpp"
#include "stepcount/ingest.hpp"
#include "stepcount/synth.hpp"
#include "test_support.hpp"

using namespace stepcount;
using namespace stepcount::synth;

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

std::vector<ingest::StepEvent> all_steps(const ingest::AnnotatedWalk& walk)
{
    std::vector<ingest::StepEvent> out;
    for (const auto& s : walk.segments) out.insert(out.end(), s.steps.begin(), s.steps.end());
    return out;
}

// Frequency with the largest DFT power over [lo, hi] Hz for one channel.
double spectral_peak(const ingest::SensorSequence& seq, std::size_t channel, double lo, double hi)
{
    double mean = 0.0;
    for (const auto& s : seq.samples) mean += s.channel(channel);
    mean /= static_cast<double>(seq.samples.size());
    double best_f = lo, best_p = -1.0;
    for (double f = lo; f <= hi; f += 0.005) {
        double re = 0.0, im = 0.0;
        for (const auto& s : seq.samples) {
            const double v = s.channel(channel) - mean;
            re += v * std::cos(2.0 * std::numbers::pi * f * s.t);
            im += v * std::sin(2.0 * std::numbers::pi * f * s.t);
        }
        const double p = re * re + im * im;
        if (p > best_p) {
            best_p = p;
            best_f = f;
        }
    }
    return best_f;
}

}  // namespace

TEST_CASE("steady cadence: 2 steps/s for 30 s gives 60 alternating strikes")
{
    auto p = preset(ingest::WalkerGroup::Sighted);
    p.cadence_mean = 2.0;
    p.cadence_jitter = 0.0;
    p.pause_rate = 0.0;
    const auto w = generate_walk(p, 30.0, 25.0, 1);
    const auto steps = all_steps(w.walk);
    REQUIRE(steps.size() == 60);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        CHECK(steps[i].foot == (i % 2 == 0 ? ingest::Foot::Left : ingest::Foot::Right));
        if (i > 0) CHECK(steps[i].t - steps[i - 1].t == doctest::Approx(0.5));
    }
    CHECK(w.sensors.samples.size() == 751);
}

TEST_CASE("silent profile: zero channels, valid strikes")
{
    auto p = preset(ingest::WalkerGroup::Sighted);
    p.amplitude.fill(0.0);
    p.noise_std.fill(0.0);
    const auto w = generate_walk(p, 20.0, 25.0, 2);
    for (const auto& s : w.sensors.samples) {
        for (std::size_t c = 0; c < 6; ++c) CHECK(s.channel(c) == 0.0);
    }
    CHECK(all_steps(w.walk).size() > 30);
}

TEST_CASE("seed determinism")
{
    const auto p = preset(ingest::WalkerGroup::LongCane);
    const auto a = generate_walk(p, 30.0, 25.0, 3);
    const auto b = generate_walk(p, 30.0, 25.0, 3);
    const auto c = generate_walk(p, 30.0, 25.0, 4);
    CHECK(a.sensors == b.sensors);
    CHECK(a.walk == b.walk);
    CHECK(all_steps(a.walk) != all_steps(c.walk));
}

TEST_CASE("profile validation")
{
    auto p = preset(ingest::WalkerGroup::Sighted);
    p.cadence_mean = 0.0;
    CHECK(code_of([&] { generate_walk(p, 10, 25, 1); }) == Errc::InvalidProfile);
    p = preset(ingest::WalkerGroup::Sighted);
    p.noise_std[2] = -0.1;
    CHECK(code_of([&] { p.validate(); }) == Errc::InvalidProfile);
    CHECK(code_of([] { preset("penguin"); }) == Errc::InvalidProfile);
    CHECK(code_of([] { generate_walk(preset(ingest::WalkerGroup::Sighted), -1, 25, 1); }) == Errc::InvalidProfile);
}

TEST_CASE("property: strike gaps, containment and file round-trip")
{
    Rng rng(55);
    const char* presets[] = {"sighted", "long_cane", "guide_dog"};
    for (int trial = 0; trial < 30; ++trial) {
        auto p = preset(presets[trial % 3]);
        p.cadence_jitter = rng.uniform(0.0, 0.5);
        p.pause_rate = rng.uniform(0.0, 0.2);
        WalkOptions opt;
        opt.participant_id = std::to_string(trial);
        opt.turn = rng.bernoulli(0.5);
        opt.features = static_cast<int>(rng.index(3));
        const auto w = generate_walk(p, rng.uniform(5.0, 40.0), rng.uniform(10.0, 100.0), rng.next_u64(), opt);
        const auto steps = all_steps(w.walk);
        for (std::size_t i = 1; i < steps.size(); ++i) CHECK(steps[i].t - steps[i - 1].t >= kMinStrikeGap - 1e-12);
        for (const auto& seg : w.walk.segments) {
            for (const auto& s : seg.steps) {
                CHECK(s.t >= seg.start);
                CHECK(s.t <= seg.end);
            }
        }
        CHECK(ingest::parse_ground_truth_xml(ingest::to_canonical_xml(w.walk)) == w.walk);
        CHECK(ingest::parse_sensor_csv(ingest::to_sensor_csv(w.sensors), opt.participant_id, "1") == w.sensors);
    }
}

TEST_CASE("vertical channel peaks at the cadence")
{
    for (const char* name : {"sighted", "guide_dog"}) {
        const auto p = preset(name);
        const auto w = generate_walk(p, 120.0, 25.0, 9);
        for (std::size_t c : {1u, 4u, 5u}) {
            CHECK(std::abs(spectral_peak(w.sensors, c, 0.3, 5.0) - p.cadence_mean) < 0.1);
        }
    }
}

TEST_CASE("cohort json and files on disk")
{
    testsupport::TempDir dir("cohort");
    const auto spec = cohort_from_json(R"({"group": "sighted", "count": 5, "paths": 6, "duration_s": 12,
                                          "seed": 4})");
    CHECK(spec.participants.size() == 5);
    CHECK(spec.paths == 6);
    CHECK(cohort_from_json(cohort_to_json(spec)).participants.size() == 5);
    const auto stems = generate_cohort(spec, dir.path());
    CHECK(stems.size() == 30);
    const auto records = ingest::load_dataset_dir(dir.path());
    REQUIRE(records.size() == 30);
    for (const auto& r : records) {
        CHECK(r.walk.walker_group == ingest::WalkerGroup::Sighted);
        CHECK_NOTHROW(ingest::extract_usable_spans(r.walk, r.sensors));
    }

    testsupport::TempDir dogs("cohort_dogs");
    const auto three = cohort_from_json(R"({"group": "guide_dog", "count": 3, "paths": 2, "duration_s": 10})");
    generate_cohort(three, dogs.path());
    const auto dog_records = ingest::load_dataset_dir(dogs.path());
    CHECK(dog_records.size() == 6);
    CHECK(dog_records.front().walk.walker_group == ingest::WalkerGroup::GuideDog);

    CHECK(code_of([] { cohort_from_json(R"({"group": "sighted", "count": 0})"); }) == Errc::InvalidProfile);
    CHECK(code_of([] {
              cohort_from_json(R"({"participants": [{"id": "1", "profile": {"cadence_mean": 1, "wings": 2}}]})");
          }) == Errc::InvalidProfile);
}
