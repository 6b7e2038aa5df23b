#include "stepcount/labeling.hpp"

#include "stepcount/error.hpp"
#include "stepcount/log.hpp"

namespace stepcount::labeling {

StrideSignal build_square_wave(std::span<const ingest::StepEvent> steps, std::span<const double> sample_times)
{
    for (std::size_t k = 1; k < sample_times.size(); ++k) {
        if (!(sample_times[k] > sample_times[k - 1])) fail(Errc::NonMonotoneTime, "sample times must increase");
    }
    for (std::size_t k = 1; k < steps.size(); ++k) {
        if (steps[k].t < steps[k - 1].t) fail(Errc::OrderViolation, "steps must be ordered by time");
        if (steps[k].foot == steps[k - 1].foot) {
            log::warn("consecutive ", ingest::to_string(steps[k].foot), " steps at ", steps[k - 1].t, " s and ",
                      steps[k].t, " s; the second produces no transition");
        }
    }

    StrideSignal sig;
    sig.times.assign(sample_times.begin(), sample_times.end());
    sig.values.assign(sample_times.size(), 0);

    std::uint8_t state = 0;
    std::size_t next = 0;
    for (std::size_t k = 0; k < sample_times.size(); ++k) {
        std::size_t applied = 0;
        while (next < steps.size() && steps[next].t <= sample_times[k]) {
            state = steps[next].foot == ingest::Foot::Left ? 1 : 0;
            ++next;
            ++applied;
        }
        if (applied > 1 && k > 0) {
            log::warn(applied, " steps fall between samples at ", sample_times[k - 1], " s and ", sample_times[k],
                      " s and collapse into one transition");
        }
        sig.values[k] = state;
    }
    return sig;
}

std::vector<double> signal_to_steps(const StrideSignal& signal)
{
    if (signal.times.size() != signal.values.size()) fail(Errc::LengthMismatch, "signal times and values differ in length");
    std::vector<double> steps;
    for (std::size_t k = 1; k < signal.values.size(); ++k) {
        if (signal.values[k] != signal.values[k - 1]) steps.push_back(signal.times[k]);
    }
    return steps;
}

std::string to_debug_csv(const StrideSignal& signal)
{
    std::string out = "t,value\n";
    for (std::size_t k = 0; k < signal.times.size(); ++k) {
        out += ingest::format_double(signal.times[k]);
        out += signal.values[k] ? ",1\n" : ",0\n";
    }
    return out;
}

}  // namespace stepcount::labeling
