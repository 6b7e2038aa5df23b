#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "stepcount/ingest.hpp"

// Synthetic gait: an alternating heel-strike process drives a gait phase that
// advances by pi per step. Each channel mixes a stride-frequency component
// (sign differs between the left and right half-cycles), cadence harmonics,
// a decaying impulse at every strike and white noise.
namespace stepcount::synth {

struct GaitProfile {
    std::string name = "sighted";
    ingest::WalkerGroup walker_group = ingest::WalkerGroup::Sighted;
    double cadence_mean = 1.9;    // steps per second
    double cadence_jitter = 0.03; // relative std of each step interval
    std::array<double, 6> amplitude{0.9, 0.4, 0.7, 0.35, 0.3, 0.6};
    int harmonics = 2;
    std::array<double, 6> noise_std{0.05, 0.05, 0.05, 0.03, 0.03, 0.04};
    double pause_rate = 0.0;      // pauses per second of walking
    double pause_min = 0.4;       // seconds
    double pause_max = 1.0;
    double asymmetry = 0.8;       // 0: feet indistinguishable, 1: stride component at full strength
    double impulse_gain = 0.8;
    double impulse_decay = 0.08;  // seconds
    double impulse_freq = 6.0;    // Hz

    void validate() const;
};

GaitProfile preset(ingest::WalkerGroup group);
GaitProfile preset(const std::string& name);

struct WalkOptions {
    std::string participant_id = "1";
    std::string path_id = "1";
    int features = 0;             // obstacle intervals injected into straight segments
    double feature_length = 1.0;  // seconds
    bool turn = false;            // straight / turn / straight instead of one straight segment
    double lead_in = -1.0;        // seconds before the first strike; < 0: half a step interval
};

struct SyntheticWalk {
    ingest::SensorSequence sensors;
    ingest::AnnotatedWalk walk;
};

/// Strikes are recorded for t < duration. Deterministic in (profile,
/// duration, sample_rate, seed, options).
SyntheticWalk generate_walk(const GaitProfile& profile, double duration, double sample_rate, std::uint64_t seed,
                            const WalkOptions& options = {});

/// Minimum gap enforced between consecutive strikes.
inline constexpr double kMinStrikeGap = 0.2;

struct CohortParticipant {
    std::string id;
    GaitProfile profile;
};

struct CohortSpec {
    std::vector<CohortParticipant> participants;
    int paths = 6;
    double duration = 60.0;
    double sample_rate = 25.0;
    std::uint64_t seed = 7;
    /// Relative per-participant spread applied to cadence and amplitudes.
    double participant_variation = 0.1;
    int features = 0;
    bool turns = false;

    void validate() const;
};

/// JSON form:
/// {"seed": 7, "paths": 6, "duration_s": 60, "sample_rate_hz": 25,
///  "participant_variation": 0.1, "features_per_walk": 0, "turns": false,
///  "participants": [{"id": "1", "profile": "sighted"},
///                   {"id": "2", "profile": {"base": "long_cane", "cadence_mean": 1.4}}]}
/// or a short form {"group": "sighted", "count": 5, ...} naming ids 1..count.
CohortSpec cohort_from_json(const std::string& text);
std::string cohort_to_json(const CohortSpec& spec);

/// Participant-specific profile after applying the cohort's variation.
GaitProfile participant_profile(const CohortSpec& spec, std::size_t participant_index);

/// Writes <stem>.csv / <stem>.xml for every (participant, path); returns the
/// stems written.
std::vector<std::string> generate_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir);

}  // namespace stepcount::synth
