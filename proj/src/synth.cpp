#include "stepcount/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "stepcount/error.hpp"
#include "stepcount/rng.hpp"

namespace stepcount::synth {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
constexpr double kPi = std::numbers::pi;

// Fixed per-channel phase offsets so channels are not copies of each other.
constexpr std::array<double, 6> kStridePhase{0.0, 0.4, -0.3, 0.8, 1.2, -0.9};
// Lateral channels (roll/yaw rate, sideways acceleration) sway once per
// stride and their impulse flips sign with the foot; the others bounce once
// per step.
constexpr std::array<double, 6> kLateral{1.0, 0.0, 1.0, 1.0, 0.0, 0.0};
constexpr std::array<double, 6> kStrideWeight{1.0, 0.3, 1.0, 1.0, 0.2, 0.2};
constexpr std::array<double, 6> kStepWeight{0.4, 1.0, 0.4, 0.3, 1.0, 1.0};

struct Strike {
    double t;
    double moving_from;  // end of the pause that preceded this interval
    ingest::Foot foot;
};

// Strikes continue past the end of the recording so the gait phase at the
// last samples is consistent with a strike that was not recorded.
std::vector<Strike> strike_process(const GaitProfile& p, double first, double until, Rng& rng)
{
    std::vector<Strike> strikes;
    double t = first;
    ingest::Foot foot = ingest::Foot::Left;
    double moving_from = first;
    while (true) {
        strikes.push_back({t, moving_from, foot});
        if (t > until) break;
        const double interval = std::max(kMinStrikeGap, (1.0 + p.cadence_jitter * rng.normal()) / p.cadence_mean);
        double pause = 0.0;
        if (p.pause_rate > 0.0 && rng.bernoulli(std::min(1.0, p.pause_rate * interval))) {
            pause = rng.uniform(p.pause_min, p.pause_max);
        }
        moving_from = t + pause;
        t = moving_from + interval;
        foot = foot == ingest::Foot::Left ? ingest::Foot::Right : ingest::Foot::Left;
    }
    // strikes[k].moving_from is the start of motion toward strike k; shift so
    // each entry carries the pause that follows it.
    for (std::size_t k = 0; k + 1 < strikes.size(); ++k) strikes[k].moving_from = strikes[k + 1].moving_from;
    strikes.back().moving_from = strikes.back().t;
    return strikes;
}

double get_number(const json& j, const char* key, double fallback)
{
    return j.contains(key) ? j.at(key).get<double>() : fallback;
}

std::array<double, 6> get_array(const json& j, const char* key, const std::array<double, 6>& fallback)
{
    if (!j.contains(key)) return fallback;
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 6) fail(Errc::InvalidProfile, std::string("'") + key + "' needs 6 values");
    std::array<double, 6> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

GaitProfile profile_from_json(const json& j)
{
    if (j.is_string()) return preset(j.get<std::string>());
    if (!j.is_object()) fail(Errc::InvalidProfile, "profile must be a preset name or an object");
    static const std::vector<std::string> known{
        "base",       "name",          "group",        "cadence_mean", "cadence_jitter", "amplitude",
        "harmonics",  "noise_std",     "pause_rate",   "pause_min",    "pause_max",      "asymmetry",
        "impulse_gain", "impulse_decay", "impulse_freq"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            fail(Errc::InvalidProfile, "unknown profile field '" + key + "'");
        }
    }
    GaitProfile p = preset(j.value("base", j.value("group", std::string("sighted"))));
    p.name = j.value("name", p.name);
    if (j.contains("group")) p.walker_group = ingest::walker_group_from_string(j.at("group").get<std::string>());
    p.cadence_mean = get_number(j, "cadence_mean", p.cadence_mean);
    p.cadence_jitter = get_number(j, "cadence_jitter", p.cadence_jitter);
    p.amplitude = get_array(j, "amplitude", p.amplitude);
    p.harmonics = j.value("harmonics", p.harmonics);
    p.noise_std = get_array(j, "noise_std", p.noise_std);
    p.pause_rate = get_number(j, "pause_rate", p.pause_rate);
    p.pause_min = get_number(j, "pause_min", p.pause_min);
    p.pause_max = get_number(j, "pause_max", p.pause_max);
    p.asymmetry = get_number(j, "asymmetry", p.asymmetry);
    p.impulse_gain = get_number(j, "impulse_gain", p.impulse_gain);
    p.impulse_decay = get_number(j, "impulse_decay", p.impulse_decay);
    p.impulse_freq = get_number(j, "impulse_freq", p.impulse_freq);
    p.validate();
    return p;
}

ordered_json profile_to_json(const GaitProfile& p)
{
    ordered_json j;
    j["name"] = p.name;
    j["group"] = std::string(ingest::to_string(p.walker_group));
    j["cadence_mean"] = p.cadence_mean;
    j["cadence_jitter"] = p.cadence_jitter;
    j["amplitude"] = p.amplitude;
    j["harmonics"] = p.harmonics;
    j["noise_std"] = p.noise_std;
    j["pause_rate"] = p.pause_rate;
    j["pause_min"] = p.pause_min;
    j["pause_max"] = p.pause_max;
    j["asymmetry"] = p.asymmetry;
    j["impulse_gain"] = p.impulse_gain;
    j["impulse_decay"] = p.impulse_decay;
    j["impulse_freq"] = p.impulse_freq;
    return j;
}

void place_features(ingest::Segment& seg, int count, double length, Rng& rng)
{
    const double lo = seg.steps.empty() ? seg.start : seg.steps.front().t;
    if (count <= 0 || seg.end - lo <= length * 2.0) return;
    for (int attempt = 0; attempt < 50 * count && static_cast<int>(seg.features.size()) < count; ++attempt) {
        const double start = rng.uniform(lo, seg.end - length);
        const double end = start + length;
        const bool clash = std::any_of(seg.features.begin(), seg.features.end(), [&](const ingest::FeatureInterval& f) {
            return start < f.end + 0.5 && f.start < end + 0.5;
        });
        if (!clash) seg.features.push_back({start, end, "obstacle"});
    }
    std::sort(seg.features.begin(), seg.features.end(),
              [](const ingest::FeatureInterval& a, const ingest::FeatureInterval& b) { return a.start < b.start; });
}

}  // namespace

void GaitProfile::validate() const
{
    auto bad = [&](const std::string& what) { fail(Errc::InvalidProfile, "profile '" + name + "': " + what); };
    if (!(cadence_mean > 0.0) || !std::isfinite(cadence_mean)) bad("cadence_mean must be > 0");
    if (!(cadence_jitter >= 0.0)) bad("cadence_jitter must be >= 0");
    for (double a : amplitude) {
        if (!(a >= 0.0) || !std::isfinite(a)) bad("amplitudes must be finite and >= 0");
    }
    for (double s : noise_std) {
        if (!(s >= 0.0) || !std::isfinite(s)) bad("noise std must be finite and >= 0");
    }
    if (harmonics < 0) bad("harmonics must be >= 0");
    if (!(pause_rate >= 0.0)) bad("pause_rate must be >= 0");
    if (!(pause_min >= 0.0 && pause_max >= pause_min)) bad("pause bounds must satisfy 0 <= min <= max");
    if (!(asymmetry >= 0.0 && asymmetry <= 1.0)) bad("asymmetry must lie in [0, 1]");
    if (!(impulse_decay > 0.0)) bad("impulse_decay must be > 0");
}

GaitProfile preset(ingest::WalkerGroup group)
{
    GaitProfile p;
    p.walker_group = group;
    switch (group) {
    case ingest::WalkerGroup::Sighted:
        p.name = "sighted";
        break;
    case ingest::WalkerGroup::LongCane:
        p.name = "long_cane";
        p.cadence_mean = 1.5;
        p.cadence_jitter = 0.10;
        for (auto& a : p.amplitude) a *= 0.8;
        for (auto& s : p.noise_std) s *= 2.0;
        p.pause_rate = 0.03;
        p.asymmetry = 0.55;
        break;
    case ingest::WalkerGroup::GuideDog:
        p.name = "guide_dog";
        p.cadence_mean = 1.75;
        p.cadence_jitter = 0.06;
        for (auto& s : p.noise_std) s *= 1.5;
        p.pause_rate = 0.01;
        p.asymmetry = 0.65;
        break;
    }
    return p;
}

GaitProfile preset(const std::string& name)
{
    try {
        return preset(ingest::walker_group_from_string(name));
    } catch (const Error&) {
        fail(Errc::InvalidProfile, "unknown profile preset '" + name + "'");
    }
}

SyntheticWalk generate_walk(const GaitProfile& profile, double duration, double sample_rate, std::uint64_t seed,
                            const WalkOptions& options)
{
    profile.validate();
    if (!(duration > 0.0) || !std::isfinite(duration)) fail(Errc::InvalidProfile, "duration must be > 0");
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) fail(Errc::InvalidProfile, "sample_rate must be > 0");
    const auto n_samples = static_cast<std::size_t>(std::floor(duration * sample_rate)) + 1;
    if (n_samples < 2) fail(Errc::InvalidProfile, "duration too short for two samples");

    Rng rng(seed);
    const double lead = options.lead_in >= 0.0 ? options.lead_in : 0.5 / profile.cadence_mean;
    const auto strikes = strike_process(profile, lead, duration, rng);

    SyntheticWalk out;
    auto& seq = out.sensors;
    seq.participant_id = options.participant_id;
    seq.path_id = options.path_id;
    seq.samples.resize(n_samples);

    const double impulse_span = 8.0 * profile.impulse_decay;
    std::size_t k = 0;  // last strike at or before t, when t >= strikes[0].t
    for (std::size_t n = 0; n < n_samples; ++n) {
        const double t = static_cast<double>(n) / sample_rate;
        while (k + 1 < strikes.size() && strikes[k + 1].t <= t) ++k;
        const bool started = t >= strikes.front().t;

        std::array<double, 6> x{};
        if (started && t >= strikes[k].moving_from && k + 1 < strikes.size()) {
            const double u = (t - strikes[k].moving_from) / (strikes[k + 1].t - strikes[k].moving_from);
            const double phi = kPi * (static_cast<double>(k) + u);
            for (std::size_t c = 0; c < 6; ++c) {
                double v = profile.asymmetry * kStrideWeight[c] * std::sin(phi + kStridePhase[c]);
                for (int h = 1; h <= profile.harmonics; ++h) {
                    v += kStepWeight[c] / h * std::cos(2.0 * h * phi + 0.5 * static_cast<double>(c) + 0.3 * h);
                }
                x[c] = profile.amplitude[c] * v;
            }
        }
        if (started) {
            for (std::size_t j = k + 1; j-- > 0;) {
                const double dt = t - strikes[j].t;
                if (dt > impulse_span) break;
                const double pulse = profile.impulse_gain * std::exp(-dt / profile.impulse_decay) *
                                     std::sin(2.0 * kPi * profile.impulse_freq * dt);
                const bool left = strikes[j].foot == ingest::Foot::Left;
                for (std::size_t c = 0; c < 6; ++c) {
                    const double mix = left ? 1.0 : 1.0 - 2.0 * profile.asymmetry * kLateral[c];
                    x[c] += profile.amplitude[c] * mix * pulse;
                }
            }
        }
        auto& s = seq.samples[n];
        s.t = t;
        for (std::size_t c = 0; c < 6; ++c) {
            const double v = x[c] + (profile.noise_std[c] > 0.0 ? profile.noise_std[c] * rng.normal() : 0.0);
            (c < 3 ? s.rotation_rate[c] : s.user_acceleration[c - 3]) = v;
        }
    }
    seq.sample_period = ingest::median_sample_gap(seq.samples);

    auto& walk = out.walk;
    walk.participant_id = options.participant_id;
    walk.path_id = options.path_id;
    walk.walker_group = profile.walker_group;
    const double t_end = seq.samples.back().t;
    if (options.turn) {
        const double a = 0.45 * t_end;
        const double b = 0.55 * t_end;
        walk.segments.push_back({"s1", ingest::SegmentKind::Straight, 0.0, a, "north", {}, {}});
        walk.segments.push_back({"t1", ingest::SegmentKind::Turn, a, b, "east", {}, {}});
        walk.segments.push_back({"s2", ingest::SegmentKind::Straight, b, t_end, "east", {}, {}});
    } else {
        walk.segments.push_back({"s1", ingest::SegmentKind::Straight, 0.0, t_end, "north", {}, {}});
    }
    for (const auto& st : strikes) {
        if (st.t >= duration || st.t > t_end) break;
        for (auto& seg : walk.segments) {
            if (st.t >= seg.start && st.t <= seg.end) {
                seg.steps.push_back({st.t, st.foot});
                break;
            }
        }
    }
    for (auto& seg : walk.segments) {
        if (seg.kind == ingest::SegmentKind::Straight) place_features(seg, options.features, options.feature_length, rng);
    }
    return out;
}

void CohortSpec::validate() const
{
    if (participants.empty()) fail(Errc::InvalidProfile, "cohort has no participants");
    if (paths < 1) fail(Errc::InvalidProfile, "paths must be >= 1");
    if (!(duration > 0.0) || !(sample_rate > 0.0)) fail(Errc::InvalidProfile, "duration and sample rate must be > 0");
    if (!(participant_variation >= 0.0 && participant_variation < 0.5)) {
        fail(Errc::InvalidProfile, "participant_variation must lie in [0, 0.5)");
    }
    for (std::size_t i = 0; i < participants.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (participants[i].id == participants[j].id) {
                fail(Errc::InvalidProfile, "duplicate participant id '" + participants[i].id + "'");
            }
        }
        participants[i].profile.validate();
    }
}

GaitProfile participant_profile(const CohortSpec& spec, std::size_t participant_index)
{
    GaitProfile p = spec.participants.at(participant_index).profile;
    if (spec.participant_variation <= 0.0) return p;
    Rng rng(mix_seed(spec.seed, 0x9A00 + participant_index));
    auto factor = [&] { return std::clamp(1.0 + spec.participant_variation * rng.normal(), 0.6, 1.4); };
    p.cadence_mean *= factor();
    for (auto& a : p.amplitude) a *= factor();
    return p;
}

CohortSpec cohort_from_json(const std::string& text)
{
    try {
        const auto j = json::parse(text);
        CohortSpec spec;
        spec.seed = j.value("seed", spec.seed);
        spec.paths = j.value("paths", spec.paths);
        spec.duration = j.value("duration_s", spec.duration);
        spec.sample_rate = j.value("sample_rate_hz", spec.sample_rate);
        spec.participant_variation = j.value("participant_variation", spec.participant_variation);
        spec.features = j.value("features_per_walk", spec.features);
        spec.turns = j.value("turns", spec.turns);
        if (j.contains("participants")) {
            for (const auto& pj : j.at("participants")) {
                CohortParticipant cp;
                cp.id = pj.at("id").is_string() ? pj.at("id").get<std::string>() : pj.at("id").dump();
                cp.profile = profile_from_json(pj.contains("profile") ? pj.at("profile") : json("sighted"));
                spec.participants.push_back(std::move(cp));
            }
        } else {
            const auto base = profile_from_json(j.value("group", json("sighted")));
            const int count = j.value("count", 0);
            for (int i = 1; i <= count; ++i) spec.participants.push_back({std::to_string(i), base});
        }
        spec.validate();
        return spec;
    } catch (const json::exception& e) {
        fail(Errc::InvalidProfile, std::string("cohort JSON: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::InvalidProfile) throw;
        fail(Errc::InvalidProfile, e.detail());
    }
}

std::string cohort_to_json(const CohortSpec& spec)
{
    ordered_json j;
    j["seed"] = spec.seed;
    j["paths"] = spec.paths;
    j["duration_s"] = spec.duration;
    j["sample_rate_hz"] = spec.sample_rate;
    j["participant_variation"] = spec.participant_variation;
    j["features_per_walk"] = spec.features;
    j["turns"] = spec.turns;
    j["participants"] = ordered_json::array();
    for (const auto& p : spec.participants) j["participants"].push_back({{"id", p.id}, {"profile", profile_to_json(p.profile)}});
    return j.dump(2) + "\n";
}

std::vector<std::string> generate_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir)
{
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail(Errc::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

    std::vector<std::string> stems;
    for (std::size_t i = 0; i < spec.participants.size(); ++i) {
        const auto profile = participant_profile(spec, i);
        for (int path = 1; path <= spec.paths; ++path) {
            WalkOptions opts;
            opts.participant_id = spec.participants[i].id;
            opts.path_id = std::to_string(path);
            opts.features = spec.features;
            opts.turn = spec.turns;
            const auto seed = mix_seed(mix_seed(spec.seed, i + 1), static_cast<std::uint64_t>(path));
            const auto w = generate_walk(profile, spec.duration, spec.sample_rate, seed, opts);
            const auto stem = ingest::walk_file_stem(opts.participant_id, opts.path_id);
            ingest::write_file(out_dir / (stem + ".csv"), ingest::to_sensor_csv(w.sensors));
            ingest::write_file(out_dir / (stem + ".xml"), ingest::to_canonical_xml(w.walk));
            stems.push_back(stem);
        }
    }
    return stems;
}

}  // namespace stepcount::synth
