#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stepcount/ingest.hpp"
#include "stepcount/labeling.hpp"
#include "stepcount/neural.hpp"

namespace stepcount::dataset {

using Index = Eigen::Index;
inline constexpr Index kChannels = 6;

/// One training example: the `timesteps` samples ending at `end_index`.
struct WindowExample {
    Eigen::MatrixXd inputs;                // timesteps x 6 (rotX, rotY, rotZ, accX, accY, accZ)
    std::vector<std::uint8_t> target_seq;  // labels over the same samples
    std::string slice_id;
    Index end_index = 0;
};

/// A usable slice as model-ready arrays.
struct LabeledSlice {
    std::string id;
    std::string participant_id;
    std::string path_id;
    std::string segment_id;
    std::vector<double> times;
    Eigen::MatrixXd inputs;               // length x 6
    std::vector<std::uint8_t> labels;     // square wave aligned with times
    std::vector<ingest::StepEvent> steps; // annotated steps inside the slice

    Index length() const { return inputs.rows(); }
};

Eigen::MatrixXd channel_matrix(const ingest::SensorSequence& seq);

/// Labels come from the whole segment's steps, so a slice that starts after a
/// removed feature inherits the stride state it was in.
LabeledSlice label_slice(const ingest::UsableSlice& slice);

std::vector<WindowExample> make_windows(const ingest::SensorSequence& slice, const labeling::StrideSignal& signal,
                                        Index timesteps, const std::string& slice_id = {});
std::vector<WindowExample> make_windows(const LabeledSlice& slice, Index timesteps);

/// Compact reference to the window ending at `end_index` of slice `slice`.
struct WindowRef {
    std::uint32_t slice = 0;
    std::uint32_t end_index = 0;

    bool operator==(const WindowRef&) const = default;
};

/// Stride-1 windows of every slice, in slice order. Slices shorter than
/// `timesteps` contribute nothing (logged).
std::vector<WindowRef> window_refs(std::span<const LabeledSlice> slices, Index timesteps);

struct SplitPlan {
    std::string name;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::vector<std::size_t> validation;
};

/// Deterministic seeded shuffle of [0, n), cut into k folds whose sizes
/// differ by at most one; plan i tests on fold i.
std::vector<SplitPlan> split_mixed_kfold(std::size_t n_examples, std::size_t k, std::uint64_t seed);

/// `participants[i]` owns example i. Test = examples of `held`; when
/// `validation` is given its examples form the validation set instead of
/// training data.
SplitPlan split_leave_one_out(std::span<const std::string> participants, const std::string& held,
                              const std::string* validation = nullptr);

/// Distinct participants in natural order ("2" before "10").
std::vector<std::string> distinct_participants(std::span<const std::string> participants);
bool natural_less(const std::string& a, const std::string& b);

std::string split_plan_to_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const std::string& text);

struct NormStats {
    std::array<double, kChannels> mean{};
    std::array<double, kChannels> stddev{};
};

inline constexpr double kStdFloor = 1e-8;

/// Population mean/std per channel over every row of every window.
NormStats fit_norm_stats(std::span<const WindowExample> train);
/// Same statistic for windows given by reference, without materializing them.
NormStats fit_norm_stats(std::span<const LabeledSlice> slices, std::span<const WindowRef> train, Index timesteps);

WindowExample apply_norm(WindowExample example, const NormStats& stats);
void apply_norm(Eigen::MatrixXd& rows, const NormStats& stats);

/// Seeded per-epoch shuffles over n examples. Batch b of epoch e is a pure
/// function of (seed, e, b); the final short batch of an epoch is kept.
class BatchSampler {
public:
    BatchSampler(std::size_t n_examples, std::size_t batch_size, std::uint64_t seed);

    std::size_t batches_per_epoch() const;
    std::vector<std::vector<std::size_t>> epoch(std::uint64_t epoch_index) const;
    /// Batch for a global training step (epochs laid end to end).
    std::vector<std::size_t> batch_for_step(std::uint64_t step) const;

private:
    const std::vector<std::size_t>& permutation(std::uint64_t epoch_index) const;

    std::size_t n_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    mutable std::uint64_t cached_epoch_ = UINT64_MAX;
    mutable std::vector<std::size_t> cached_perm_;
};

std::vector<std::vector<std::size_t>> make_batches(std::size_t n_examples, std::size_t batch_size, std::uint64_t seed,
                                                   std::uint64_t epoch = 0);

/// Stacks the referenced windows into a training batch; `pick` indexes `refs`.
/// Targets are the labels over each window.
neural::SequenceBatch gather_batch(std::span<const LabeledSlice> slices, std::span<const WindowRef> refs,
                                   std::span<const std::size_t> pick, Index timesteps);

neural::SequenceBatch gather_batch(std::span<const WindowExample> examples);

}  // namespace stepcount::dataset
