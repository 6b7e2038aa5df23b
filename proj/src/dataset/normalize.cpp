#include <algorithm>
#include <cmath>

#include "stepcount/dataset.hpp"
#include "stepcount/error.hpp"

namespace stepcount::dataset {

namespace {

// Two passes (mean, then centered squares) to avoid cancellation on
// channels with a large offset.
template <typename ForEachRow>
NormStats fit(ForEachRow&& for_each_row)
{
    NormStats stats;
    std::array<double, kChannels> sum{};
    double count = 0.0;
    for_each_row([&](const auto& row) {
        for (Index c = 0; c < kChannels; ++c) sum[static_cast<std::size_t>(c)] += row(c);
        count += 1.0;
    });
    if (count == 0.0) fail(Errc::EmptyTrainSet, "cannot fit normalization on zero training windows");
    for (std::size_t c = 0; c < sum.size(); ++c) stats.mean[c] = sum[c] / count;

    std::array<double, kChannels> sq{};
    for_each_row([&](const auto& row) {
        for (Index c = 0; c < kChannels; ++c) {
            const double d = row(c) - stats.mean[static_cast<std::size_t>(c)];
            sq[static_cast<std::size_t>(c)] += d * d;
        }
    });
    for (std::size_t c = 0; c < sq.size(); ++c) stats.stddev[c] = std::max(std::sqrt(sq[c] / count), kStdFloor);
    return stats;
}

}  // namespace

NormStats fit_norm_stats(std::span<const WindowExample> train)
{
    for (const auto& w : train) {
        if (w.inputs.cols() != kChannels) fail(Errc::ShapeMismatch, "windows must carry 6 channels");
    }
    return fit([&](auto&& visit) {
        for (const auto& w : train) {
            for (Index r = 0; r < w.inputs.rows(); ++r) visit(w.inputs.row(r));
        }
    });
}

NormStats fit_norm_stats(std::span<const LabeledSlice> slices, std::span<const WindowRef> train, Index timesteps)
{
    return fit([&](auto&& visit) {
        for (const auto& ref : train) {
            const auto& inputs = slices[ref.slice].inputs;
            const Index first = static_cast<Index>(ref.end_index) - timesteps + 1;
            for (Index r = first; r <= static_cast<Index>(ref.end_index); ++r) visit(inputs.row(r));
        }
    });
}

void apply_norm(Eigen::MatrixXd& rows, const NormStats& stats)
{
    if (rows.cols() != kChannels) fail(Errc::ShapeMismatch, "normalization expects 6 channels");
    for (Index c = 0; c < kChannels; ++c) {
        const auto k = static_cast<std::size_t>(c);
        rows.col(c) = (rows.col(c).array() - stats.mean[k]) / stats.stddev[k];
    }
}

WindowExample apply_norm(WindowExample example, const NormStats& stats)
{
    apply_norm(example.inputs, stats);
    return example;
}

}  // namespace stepcount::dataset
