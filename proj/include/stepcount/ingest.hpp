#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace stepcount::ingest {

/// Inertial channels in model input order.
inline constexpr std::array<std::string_view, 6> kChannelColumns{
    "rotationRateX",     "rotationRateY",     "rotationRateZ",
    "userAccelerationX", "userAccelerationY", "userAccelerationZ",
};

struct SensorSample {
    double t = 0.0;                                // seconds
    std::array<double, 3> rotation_rate{};         // rad/s
    std::array<double, 3> user_acceleration{};     // g

    double channel(std::size_t k) const { return k < 3 ? rotation_rate[k] : user_acceleration[k - 3]; }

    bool operator==(const SensorSample&) const = default;
};

struct SensorSequence {
    std::string participant_id;
    std::string path_id;
    std::vector<SensorSample> samples;
    double sample_period = 0.0;  // median inter-sample gap

    bool operator==(const SensorSequence&) const = default;
};

enum class Foot { Left, Right };

struct StepEvent {
    double t = 0.0;
    Foot foot = Foot::Left;

    bool operator==(const StepEvent&) const = default;
};

struct FeatureInterval {
    double start = 0.0;
    double end = 0.0;
    std::string description;

    bool operator==(const FeatureInterval&) const = default;
};

enum class SegmentKind { Straight, Turn };

struct Segment {
    std::string id;
    SegmentKind kind = SegmentKind::Straight;
    double start = 0.0;
    double end = 0.0;
    std::string direction;
    std::vector<StepEvent> steps;
    std::vector<FeatureInterval> features;

    bool operator==(const Segment&) const = default;
};

enum class WalkerGroup { Sighted, LongCane, GuideDog };

struct AnnotatedWalk {
    std::string participant_id;
    std::string path_id;
    WalkerGroup walker_group = WalkerGroup::Sighted;
    std::vector<Segment> segments;

    bool operator==(const AnnotatedWalk&) const = default;
};

std::string_view to_string(Foot foot);
std::string_view to_string(SegmentKind kind);
std::string_view to_string(WalkerGroup group);
WalkerGroup walker_group_from_string(std::string_view text);

struct CsvOptions {
    std::string timestamp_column = "timestamp";
};

/// Reads a header-bearing CSV and keeps the timestamp plus the six inertial
/// channels; every other column is ignored.
SensorSequence parse_sensor_csv(std::string_view bytes, std::string participant_id, std::string path_id,
                                const CsvOptions& options = {});

/// Writes timestamp + the six channels (plus any `extra_columns`, filled
/// with zeros) using shortest round-trip number formatting.
std::string to_sensor_csv(const SensorSequence& seq, const std::vector<std::string>& extra_columns = {},
                          const CsvOptions& options = {});

/// Parses the canonical annotation schema:
///   <walk participant=".." path=".." group="sighted|long_cane|guide_dog">
///     <segment id=".." kind="straight|turn" start="s" end="s" direction="..">
///       <step t="s" foot="left|right"/>
///       <feature start="s" end="s" desc=".."/>
AnnotatedWalk parse_ground_truth_xml(std::string_view bytes);

std::string to_canonical_xml(const AnnotatedWalk& walk);

/// A contiguous piece of one straight segment that survived filtering.
struct UsableSlice {
    Segment segment;                  // the enclosing straight segment
    std::size_t piece = 0;            // position among the segment's slices
    double span_start = 0.0;          // piece of [first step, segment end] minus features
    double span_end = 0.0;
    std::size_t first_index = 0;      // index of data.samples[0] in the source sequence
    SensorSequence data;              // samples inside the piece (>= 2)
    std::vector<StepEvent> steps;     // segment steps falling inside the piece

    std::string id() const;
};

/// Straight segments only, trimmed to start at the segment's first heel
/// strike, with samples whose t lies in [feature.start, feature.end) removed.
/// Feature removal can split a segment into several slices; slices with fewer
/// than two samples are dropped.
std::vector<UsableSlice> extract_usable_spans(const AnnotatedWalk& walk, const SensorSequence& seq);

/// One recording: annotation and matching sensor data.
struct WalkRecord {
    AnnotatedWalk walk;
    SensorSequence sensors;
    std::filesystem::path xml_path;
    std::filesystem::path csv_path;
};

/// Stem used for the file pair of a (participant, path) walk.
std::string walk_file_stem(const std::string& participant_id, const std::string& path_id);

/// Loads every <stem>.xml with its <stem>.csv from a directory, sorted by
/// stem. When `group_filter` is set, sensor files of other groups are never
/// opened.
std::vector<WalkRecord> load_dataset_dir(const std::filesystem::path& dir, const CsvOptions& options = {},
                                         const WalkerGroup* group_filter = nullptr);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Median gap between consecutive sample times (0 for fewer than 2 samples).
double median_sample_gap(const std::vector<SensorSample>& samples);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace stepcount::ingest
