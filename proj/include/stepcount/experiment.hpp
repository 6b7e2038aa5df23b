#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepcount/dataset.hpp"
#include "stepcount/ingest.hpp"
#include "stepcount/metrics.hpp"
#include "stepcount/neural.hpp"
#include "stepcount/postprocess.hpp"

namespace stepcount::experiment {

enum class Protocol { Mixed, LeaveOneOut };

std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& text);

/// Everything that affects results lives here so a run is reproducible from
/// the config file alone.
struct ExperimentConfig {
    std::filesystem::path dataset_root;
    ingest::WalkerGroup group = ingest::WalkerGroup::Sighted;
    Protocol protocol = Protocol::Mixed;
    std::size_t folds = 10;
    /// Leave-one-out: a participant id, or "all" to rotate the test participant.
    std::string held_test = "all";
    /// Leave-one-out: rotate a validation participant out of the training pool.
    bool validation = false;
    /// Participants used by `eval` (and excluded by `train`); empty = all.
    std::vector<std::string> test_participants;
    neural::TrainConfig train;
    /// Optional grid of TrainConfig overrides; selection needs validation.
    std::vector<std::string> grid;  // each entry a JSON object text
    postprocess::PostprocessConfig postprocess;
    metrics::Metric1Mode metric1_mode = metrics::Metric1Mode::ExtendToSpan;
    /// Mixed protocol: folds are drawn over contiguous chunks of this length.
    double chunk_seconds = 10.0;
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "out";
    std::string timestamp_column = "timestamp";

    void validate() const;
};

/// Relative paths resolve against `base_dir`. Unknown keys raise InvalidConfig.
ExperimentConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
std::string config_to_json(const ExperimentConfig& config);

neural::TrainConfig train_config_from_json(const std::string& text, neural::TrainConfig base = {});
std::string train_config_to_json(const neural::TrainConfig& config);

/// All usable slices of one walker group, labeled. Other groups' sensor files
/// are never opened.
struct GroupData {
    std::vector<dataset::LabeledSlice> slices;
    std::vector<std::string> participants;  // distinct, natural order
    std::size_t walks = 0;
};

GroupData load_group(const ExperimentConfig& config);
GroupData group_from_records(std::span<const ingest::WalkRecord> records, ingest::WalkerGroup group);

/// Positions [first, last] of one slice.
struct SliceRange {
    std::size_t slice = 0;
    dataset::Index first = 0;
    dataset::Index last = 0;

    bool operator==(const SliceRange&) const = default;
};

/// Consecutive chunks of about `chunk_seconds` (never fewer than `timesteps`
/// samples) covering every slice that can hold one window; a short tail is
/// merged into the previous chunk.
std::vector<SliceRange> make_chunks(std::span<const dataset::LabeledSlice> slices, dataset::Index timesteps,
                                    double chunk_seconds);

/// Windows whose last sample lies in one of the ranges.
std::vector<dataset::WindowRef> windows_in(std::span<const SliceRange> ranges, dataset::Index timesteps);

/// Whole-slice ranges for the slices selected by `keep`.
std::vector<SliceRange> whole_slices(std::span<const dataset::LabeledSlice> slices,
                                     const std::function<bool(const dataset::LabeledSlice&)>& keep,
                                     dataset::Index timesteps);

struct TrainedModel {
    neural::LstmModel model;
    dataset::NormStats norm;
    std::vector<double> loss_trace;
};

/// Fits normalization on the training windows only, then trains.
TrainedModel train_model(std::span<const dataset::LabeledSlice> slices, std::span<const dataset::WindowRef> train,
                         const neural::TrainConfig& config, std::uint64_t batch_seed,
                         const std::function<void(std::uint64_t, double)>& on_step = {});

std::vector<dataset::LabeledSlice> normalized(std::span<const dataset::LabeledSlice> slices,
                                              const dataset::NormStats& norm);

/// Per-range evaluation material, kept for plots and tests.
struct RangeEval {
    metrics::SegmentEval segment;
    metrics::AccuracySample accuracy;
};

/// Predicts every position of each range. Predicted steps are bit changes at
/// positions first..last (the sample before `first` provides context); the
/// ground truth is the steps with t in (t[context], t[last]].
std::vector<RangeEval> evaluate_ranges(const neural::LstmModel& model, std::span<const dataset::LabeledSlice> normalized,
                                       std::span<const SliceRange> ranges, dataset::Index timesteps,
                                       const postprocess::PostprocessConfig& post);

metrics::StepErrorReport summarize(std::span<const RangeEval> evals, metrics::Metric1Mode mode);

struct FoldResult {
    std::string name;
    std::string test_participant;
    std::string validation_participant;
    std::size_t train_windows = 0;
    std::size_t test_windows = 0;
    std::optional<metrics::StepErrorReport> test;
    std::optional<metrics::StepErrorReport> validation;
    std::vector<double> loss_trace;
    std::string error;       // empty when the fold completed
    std::string error_code;
};

struct Candidate {
    std::string overrides;   // JSON object text, "{}" for the base config
    double mean_validation_metric3 = 0.0;
};

struct ExperimentResult {
    std::string protocol;    // "mixed", "leave_one_out" or "eval"
    std::string group;
    std::string config_json;
    std::vector<FoldResult> folds;
    std::vector<Candidate> candidates;  // filled when a grid was searched
    std::size_t selected = 0;
};

ExperimentResult run_mixed(const ExperimentConfig& config, const GroupData& data);
ExperimentResult run_leave_one_out(const ExperimentConfig& config, const GroupData& data);
/// Loads the group and dispatches on config.protocol.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Mean rates over the folds that produced a report (event counts summed).
std::optional<metrics::StepErrorReport> mean_report(std::span<const FoldResult> folds, bool validation);

enum class ReportFormat { Json, Table, PlotData };
ReportFormat report_format_from_string(const std::string& text);

std::string report_to_json(const ExperimentResult& result);
ExperimentResult report_from_json(const std::string& text);

/// File name -> contents. Json: report.json; Table: report_table.txt;
/// PlotData: folds.csv (fold, metric, under, over) and loss.csv (fold, step, loss).
/// Raises EmptyReport for a result without folds.
std::map<std::string, std::string> render_report(const ExperimentResult& result, ReportFormat format);
std::vector<std::filesystem::path> write_report(const ExperimentResult& result, ReportFormat format,
                                                const std::filesystem::path& dir);

/// Checkpoint extras carrying the input normalization.
neural::Checkpoint to_checkpoint(const TrainedModel& trained, const ExperimentConfig& config);
TrainedModel from_checkpoint(const neural::Checkpoint& checkpoint);

}  // namespace stepcount::experiment
