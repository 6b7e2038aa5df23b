#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace stepcount {

enum class Errc {
    // ingest
    MissingColumn,
    NonMonotoneTime,
    MalformedRow,
    TooFewSamples,
    SchemaViolation,
    OrderViolation,
    EmptyWalk,
    IdentityMismatch,
    NoUsableData,
    // dataset
    SliceTooShort,
    TooFewExamples,
    UnknownParticipant,
    SingleParticipant,
    TooFewParticipants,
    EmptyTrainSet,
    // neural
    ShapeMismatch,
    NonFiniteActivation,
    StaleCache,
    DivergedTraining,
    CorruptCheckpoint,
    // postprocess / metrics
    LengthMismatch,
    EmptyGroundTruth,
    OutOfSpan,
    NoValidSegments,
    // synth / experiment / io
    InvalidProfile,
    InvalidConfig,
    EmptyReport,
    IoFailure,
};

std::string_view errc_name(Errc code) noexcept;
/// Inverse of errc_name; nullopt for unknown names.
std::optional<Errc> errc_from_name(std::string_view name) noexcept;

/// Every module reports failures through this exception; `code()` carries
/// the error kind so callers (the CLI in particular) can map it to an exit
/// status without parsing messages.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message);

    Errc code() const noexcept { return code_; }
    /// The message without the error-kind prefix carried by what().
    const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

[[noreturn]] void fail(Errc code, const std::string& message);

}  // namespace stepcount
