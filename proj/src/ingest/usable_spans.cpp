#include <algorithm>

#include "stepcount/error.hpp"
#include "stepcount/ingest.hpp"
#include "stepcount/log.hpp"

namespace stepcount::ingest {

namespace {

struct Piece {
    double start;
    double end;
    bool closed_end;  // only the final piece of a segment keeps its end sample

    bool contains(double t) const { return t >= start && (closed_end ? t <= end : t < end); }
};

// [first_step, segment_end] minus the union of [feature.start, feature.end).
std::vector<Piece> subtract_features(double lo, double hi, std::vector<FeatureInterval> features)
{
    std::sort(features.begin(), features.end(),
              [](const FeatureInterval& a, const FeatureInterval& b) { return a.start < b.start; });
    std::vector<Piece> pieces;
    double cursor = lo;
    for (const auto& f : features) {
        if (f.end <= cursor) continue;
        if (f.start > hi) break;
        if (f.start > cursor) pieces.push_back({cursor, f.start, false});
        cursor = std::max(cursor, f.end);
    }
    if (cursor <= hi) pieces.push_back({cursor, hi, true});
    return pieces;
}

}  // namespace

std::string UsableSlice::id() const
{
    return data.participant_id + "/" + data.path_id + "/" + segment.id + "#" + std::to_string(piece);
}

std::vector<UsableSlice> extract_usable_spans(const AnnotatedWalk& walk, const SensorSequence& seq)
{
    if (walk.participant_id != seq.participant_id || walk.path_id != seq.path_id) {
        fail(Errc::IdentityMismatch, "annotation is for participant " + walk.participant_id + " path " + walk.path_id +
                                         " but sensor data is for participant " + seq.participant_id + " path " +
                                         seq.path_id);
    }
    const auto& samples = seq.samples;
    auto first_at_or_after = [&](double t) {
        return static_cast<std::size_t>(
            std::lower_bound(samples.begin(), samples.end(), t, [](const SensorSample& s, double v) { return s.t < v; }) -
            samples.begin());
    };

    std::vector<UsableSlice> slices;
    for (const auto& seg : walk.segments) {
        if (seg.kind != SegmentKind::Straight) continue;
        if (seg.steps.empty()) {
            log::info("segment '", seg.id, "' of ", walk.participant_id, "/", walk.path_id,
                      " has no steps and is skipped");
            continue;
        }
        const auto pieces = subtract_features(seg.steps.front().t, seg.end, seg.features);
        std::size_t piece_index = 0;
        for (const auto& piece : pieces) {
            const std::size_t begin = first_at_or_after(piece.start);
            std::size_t end = begin;
            while (end < samples.size() && piece.contains(samples[end].t)) ++end;
            if (end - begin < 2) {
                log::info("slice [", piece.start, ", ", piece.end, "] of segment '", seg.id, "' in ",
                          walk.participant_id, "/", walk.path_id, " holds ", end - begin, " samples and is dropped");
                continue;
            }
            UsableSlice slice;
            slice.segment = seg;
            slice.piece = piece_index++;
            slice.span_start = piece.start;
            slice.span_end = piece.end;
            slice.first_index = begin;
            slice.data.participant_id = seq.participant_id;
            slice.data.path_id = seq.path_id;
            slice.data.sample_period = seq.sample_period;
            slice.data.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                      samples.begin() + static_cast<std::ptrdiff_t>(end));
            for (const auto& step : seg.steps) {
                if (piece.contains(step.t)) slice.steps.push_back(step);
            }
            slices.push_back(std::move(slice));
        }
    }
    if (slices.empty()) {
        fail(Errc::NoUsableData,
             "no straight segment of " + walk.participant_id + "/" + walk.path_id + " survives filtering");
    }
    return slices;
}

}  // namespace stepcount::ingest
