#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stepcount/labeling.hpp"

namespace stepcount::postprocess {

struct PostprocessConfig {
    double threshold = 0.5;
    /// Runs shorter than this many samples are absorbed into the preceding
    /// state. 0 disables the filter (the default, and what evaluation uses).
    std::size_t min_dwell = 0;

    void validate() const;
};

/// value > threshold -> 1, otherwise 0 (the boundary maps to 0).
std::vector<std::uint8_t> binarize(std::span<const double> values, const PostprocessConfig& cfg = {});
labeling::StrideSignal binarize(std::span<const double> values, std::span<const double> times,
                                const PostprocessConfig& cfg = {});

std::vector<std::uint8_t> apply_min_dwell(std::span<const std::uint8_t> bits, std::size_t min_dwell);

/// Binarize (plus the optional dwell filter), then every bit change is a step.
std::vector<double> predicted_steps(std::span<const double> values, std::span<const double> times,
                                    const PostprocessConfig& cfg = {});

/// Fraction of positions where the two binary signals agree.
double signal_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

/// "t,raw,binary,truth" rows for plotting.
std::string to_debug_csv(std::span<const double> times, std::span<const double> raw,
                         std::span<const std::uint8_t> binary, std::span<const std::uint8_t> truth);

}  // namespace stepcount::postprocess
