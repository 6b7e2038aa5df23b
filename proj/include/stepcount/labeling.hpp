#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stepcount/ingest.hpp"

namespace stepcount::labeling {

/// Binary stride state per sample: 1 after a left heel strike, 0 after a
/// right one (and before any strike).
struct StrideSignal {
    std::vector<double> times;
    std::vector<std::uint8_t> values;

    bool operator==(const StrideSignal&) const = default;
};

/// Each strike takes effect at the first sample with time >= strike time.
/// Steps must be ordered; sample times strictly increasing.
StrideSignal build_square_wave(std::span<const ingest::StepEvent> steps, std::span<const double> sample_times);

/// Times of every sample whose value differs from the preceding sample.
std::vector<double> signal_to_steps(const StrideSignal& signal);

/// Plot-friendly "t,value" rows.
std::string to_debug_csv(const StrideSignal& signal);

}  // namespace stepcount::labeling
