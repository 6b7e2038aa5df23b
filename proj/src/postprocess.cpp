#include "stepcount/postprocess.hpp"

#include <cmath>

#include "stepcount/error.hpp"
#include "stepcount/ingest.hpp"

namespace stepcount::postprocess {

void PostprocessConfig::validate() const
{
    if (!(threshold > 0.0 && threshold < 1.0)) fail(Errc::InvalidConfig, "threshold must lie strictly between 0 and 1");
}

std::vector<std::uint8_t> binarize(std::span<const double> values, const PostprocessConfig& cfg)
{
    cfg.validate();
    std::vector<std::uint8_t> bits(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (!std::isfinite(values[k])) fail(Errc::NonFiniteActivation, "signal value " + std::to_string(k) + " is not finite");
        bits[k] = values[k] > cfg.threshold ? 1 : 0;
    }
    return cfg.min_dwell > 1 ? apply_min_dwell(bits, cfg.min_dwell) : bits;
}

labeling::StrideSignal binarize(std::span<const double> values, std::span<const double> times,
                                const PostprocessConfig& cfg)
{
    if (values.size() != times.size()) fail(Errc::LengthMismatch, "signal values and times differ in length");
    return {std::vector<double>(times.begin(), times.end()), binarize(values, cfg)};
}

std::vector<std::uint8_t> apply_min_dwell(std::span<const std::uint8_t> bits, std::size_t min_dwell)
{
    std::vector<std::uint8_t> out(bits.begin(), bits.end());
    std::size_t k = 0;
    while (k < out.size()) {
        std::size_t end = k;
        while (end < out.size() && out[end] == out[k]) ++end;
        // The first run has nothing to merge into; a trailing short run is kept
        // since it may continue beyond the slice.
        if (k > 0 && end < out.size() && end - k < min_dwell) {
            for (std::size_t j = k; j < end; ++j) out[j] = out[k - 1];
        }
        k = end;
    }
    return out;
}

std::vector<double> predicted_steps(std::span<const double> values, std::span<const double> times,
                                    const PostprocessConfig& cfg)
{
    return labeling::signal_to_steps(binarize(values, times, cfg));
}

double signal_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth)
{
    if (predicted.size() != truth.size()) {
        fail(Errc::LengthMismatch, "predicted signal has " + std::to_string(predicted.size()) +
                                       " samples, ground truth has " + std::to_string(truth.size()));
    }
    if (predicted.empty()) fail(Errc::LengthMismatch, "signal accuracy of empty signals is undefined");
    std::size_t same = 0;
    for (std::size_t k = 0; k < predicted.size(); ++k) same += predicted[k] == truth[k];
    return static_cast<double>(same) / static_cast<double>(predicted.size());
}

std::string to_debug_csv(std::span<const double> times, std::span<const double> raw,
                         std::span<const std::uint8_t> binary, std::span<const std::uint8_t> truth)
{
    if (raw.size() != times.size() || binary.size() != times.size() || truth.size() != times.size()) {
        fail(Errc::LengthMismatch, "debug dump columns differ in length");
    }
    std::string out = "t,raw,binary,truth\n";
    for (std::size_t k = 0; k < times.size(); ++k) {
        out += ingest::format_double(times[k]) + ',' + ingest::format_double(raw[k]) + ',' +
               (binary[k] ? '1' : '0') + ',' + (truth[k] ? '1' : '0') + '\n';
    }
    return out;
}

}  // namespace stepcount::postprocess
