#include <algorithm>
#include <cmath>

#include "stepcount/dataset.hpp"
#include "stepcount/error.hpp"
#include "stepcount/log.hpp"

namespace stepcount::dataset {

namespace {

void require_length(Index length, Index timesteps, const std::string& id)
{
    if (timesteps < 1) fail(Errc::InvalidConfig, "timesteps must be >= 1");
    if (length < timesteps) {
        fail(Errc::SliceTooShort, "slice " + (id.empty() ? std::string("<unnamed>") : id) + " has " +
                                      std::to_string(length) + " samples, fewer than " + std::to_string(timesteps) +
                                      " timesteps");
    }
}

std::vector<WindowExample> windows_of(const Eigen::MatrixXd& inputs, std::span<const std::uint8_t> labels,
                                      Index timesteps, const std::string& id)
{
    require_length(inputs.rows(), timesteps, id);
    if (static_cast<Index>(labels.size()) != inputs.rows()) {
        fail(Errc::LengthMismatch, "labels are not aligned with slice " + id);
    }
    if (!inputs.allFinite()) fail(Errc::MalformedRow, "slice " + id + " holds non-finite inputs");

    std::vector<WindowExample> out;
    out.reserve(static_cast<std::size_t>(inputs.rows() - timesteps + 1));
    for (Index e = timesteps - 1; e < inputs.rows(); ++e) {
        const Index first = e - timesteps + 1;
        WindowExample w;
        w.inputs = inputs.middleRows(first, timesteps);
        w.target_seq.assign(labels.begin() + first, labels.begin() + e + 1);
        w.slice_id = id;
        w.end_index = e;
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace

Eigen::MatrixXd channel_matrix(const ingest::SensorSequence& seq)
{
    Eigen::MatrixXd m(static_cast<Index>(seq.samples.size()), kChannels);
    for (std::size_t r = 0; r < seq.samples.size(); ++r) {
        for (Index c = 0; c < kChannels; ++c) m(static_cast<Index>(r), c) = seq.samples[r].channel(static_cast<std::size_t>(c));
    }
    return m;
}

LabeledSlice label_slice(const ingest::UsableSlice& slice)
{
    LabeledSlice out;
    out.id = slice.id();
    out.participant_id = slice.data.participant_id;
    out.path_id = slice.data.path_id;
    out.segment_id = slice.segment.id;
    out.times.reserve(slice.data.samples.size());
    for (const auto& s : slice.data.samples) out.times.push_back(s.t);
    out.inputs = channel_matrix(slice.data);
    out.labels = labeling::build_square_wave(slice.segment.steps, out.times).values;
    out.steps = slice.steps;
    return out;
}

std::vector<WindowExample> make_windows(const ingest::SensorSequence& slice, const labeling::StrideSignal& signal,
                                        Index timesteps, const std::string& slice_id)
{
    if (signal.values.size() != slice.samples.size()) {
        fail(Errc::LengthMismatch, "signal has " + std::to_string(signal.values.size()) + " values but slice has " +
                                       std::to_string(slice.samples.size()) + " samples");
    }
    return windows_of(channel_matrix(slice), signal.values, timesteps, slice_id);
}

std::vector<WindowExample> make_windows(const LabeledSlice& slice, Index timesteps)
{
    return windows_of(slice.inputs, slice.labels, timesteps, slice.id);
}

std::vector<WindowRef> window_refs(std::span<const LabeledSlice> slices, Index timesteps)
{
    if (timesteps < 1) fail(Errc::InvalidConfig, "timesteps must be >= 1");
    std::vector<WindowRef> refs;
    for (std::size_t s = 0; s < slices.size(); ++s) {
        const Index len = slices[s].length();
        if (len < timesteps) {
            log::info("slice ", slices[s].id, " (", len, " samples) is shorter than ", timesteps,
                      " timesteps and yields no windows");
            continue;
        }
        for (Index e = timesteps - 1; e < len; ++e) {
            refs.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(e)});
        }
    }
    return refs;
}

neural::SequenceBatch gather_batch(std::span<const LabeledSlice> slices, std::span<const WindowRef> refs,
                                   std::span<const std::size_t> pick, Index timesteps)
{
    const auto batch = static_cast<Index>(pick.size());
    neural::SequenceBatch out;
    out.inputs.resize(kChannels, timesteps * batch);
    out.targets.resize(timesteps, batch);
    for (Index j = 0; j < batch; ++j) {
        const WindowRef ref = refs[pick[static_cast<std::size_t>(j)]];
        const LabeledSlice& slice = slices[ref.slice];
        const Index first = static_cast<Index>(ref.end_index) - timesteps + 1;
        for (Index t = 0; t < timesteps; ++t) {
            out.inputs.col(t * batch + j) = slice.inputs.row(first + t).transpose();
            out.targets(t, j) = slice.labels[static_cast<std::size_t>(first + t)];
        }
    }
    return out;
}

neural::SequenceBatch gather_batch(std::span<const WindowExample> examples)
{
    if (examples.empty()) fail(Errc::EmptyTrainSet, "cannot build a batch from zero windows");
    const Index timesteps = examples.front().inputs.rows();
    const auto batch = static_cast<Index>(examples.size());
    neural::SequenceBatch out;
    out.inputs.resize(examples.front().inputs.cols(), timesteps * batch);
    out.targets.resize(timesteps, batch);
    for (Index j = 0; j < batch; ++j) {
        const auto& w = examples[static_cast<std::size_t>(j)];
        if (w.inputs.rows() != timesteps) fail(Errc::ShapeMismatch, "windows in a batch differ in length");
        for (Index t = 0; t < timesteps; ++t) {
            out.inputs.col(t * batch + j) = w.inputs.row(t).transpose();
            out.targets(t, j) = w.target_seq[static_cast<std::size_t>(t)];
        }
    }
    return out;
}

}  // namespace stepcount::dataset
