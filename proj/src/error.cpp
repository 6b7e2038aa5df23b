#include "stepcount/error.hpp"

namespace stepcount {

std::string_view errc_name(Errc code) noexcept
{
    switch (code) {
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::NonMonotoneTime: return "NonMonotoneTime";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::OrderViolation: return "OrderViolation";
    case Errc::EmptyWalk: return "EmptyWalk";
    case Errc::IdentityMismatch: return "IdentityMismatch";
    case Errc::NoUsableData: return "NoUsableData";
    case Errc::SliceTooShort: return "SliceTooShort";
    case Errc::TooFewExamples: return "TooFewExamples";
    case Errc::UnknownParticipant: return "UnknownParticipant";
    case Errc::SingleParticipant: return "SingleParticipant";
    case Errc::TooFewParticipants: return "TooFewParticipants";
    case Errc::EmptyTrainSet: return "EmptyTrainSet";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonFiniteActivation: return "NonFiniteActivation";
    case Errc::StaleCache: return "StaleCache";
    case Errc::DivergedTraining: return "DivergedTraining";
    case Errc::CorruptCheckpoint: return "CorruptCheckpoint";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyGroundTruth: return "EmptyGroundTruth";
    case Errc::OutOfSpan: return "OutOfSpan";
    case Errc::NoValidSegments: return "NoValidSegments";
    case Errc::InvalidProfile: return "InvalidProfile";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::EmptyReport: return "EmptyReport";
    case Errc::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

std::optional<Errc> errc_from_name(std::string_view name) noexcept
{
    for (int k = 0; k <= static_cast<int>(Errc::IoFailure); ++k) {
        if (errc_name(static_cast<Errc>(k)) == name) return static_cast<Errc>(k);
    }
    return std::nullopt;
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code), detail_(message)
{
}

void fail(Errc code, const std::string& message)
{
    throw Error(code, message);
}

}  // namespace stepcount
