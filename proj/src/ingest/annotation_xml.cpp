#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "stepcount/error.hpp"
#include "stepcount/ingest.hpp"

namespace stepcount::ingest {

namespace {

namespace pt = boost::property_tree;

std::string context_of(const Segment* seg)
{
    return seg ? " (segment '" + seg->id + "')" : std::string();
}

std::optional<std::string> attribute(const pt::ptree& node, const std::string& name)
{
    if (auto attrs = node.get_child_optional("<xmlattr>")) {
        if (auto value = attrs->get_optional<std::string>(name)) return *value;
    }
    return std::nullopt;
}

std::string required(const pt::ptree& node, const std::string& element, const std::string& name,
                     const Segment* seg = nullptr)
{
    auto value = attribute(node, name);
    if (!value) fail(Errc::SchemaViolation, "<" + element + "> lacks attribute '" + name + "'" + context_of(seg));
    return *value;
}

double required_seconds(const pt::ptree& node, const std::string& element, const std::string& name,
                        const Segment* seg = nullptr)
{
    const std::string text = required(node, element, name, seg);
    double value = 0.0;
    const auto* begin = text.data();
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
        fail(Errc::SchemaViolation,
             "<" + element + "> attribute '" + name + "' is not a time in seconds: '" + text + "'" + context_of(seg));
    }
    return value;
}

void check_known_attributes(const pt::ptree& node, const std::string& element,
                            std::initializer_list<std::string_view> allowed)
{
    if (auto attrs = node.get_child_optional("<xmlattr>")) {
        for (const auto& [key, _] : *attrs) {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                fail(Errc::SchemaViolation, "<" + element + "> has unknown attribute '" + key + "'");
            }
        }
    }
}

bool is_markup_child(const std::string& key) { return key == "<xmlattr>" || key == "<xmlcomment>"; }

Segment parse_segment(const pt::ptree& node)
{
    check_known_attributes(node, "segment", {"id", "kind", "start", "end", "direction"});
    Segment seg;
    seg.id = required(node, "segment", "id");
    const auto kind = required(node, "segment", "kind", &seg);
    if (kind == "straight") {
        seg.kind = SegmentKind::Straight;
    } else if (kind == "turn") {
        seg.kind = SegmentKind::Turn;
    } else {
        fail(Errc::SchemaViolation, "segment kind must be straight or turn, got '" + kind + "'" + context_of(&seg));
    }
    seg.start = required_seconds(node, "segment", "start", &seg);
    seg.end = required_seconds(node, "segment", "end", &seg);
    seg.direction = attribute(node, "direction").value_or("");
    if (!(seg.start < seg.end)) fail(Errc::SchemaViolation, "segment start must precede its end" + context_of(&seg));

    for (const auto& [key, child] : node) {
        if (is_markup_child(key)) continue;
        if (key == "step") {
            check_known_attributes(child, "step", {"t", "foot"});
            StepEvent step;
            step.t = required_seconds(child, "step", "t", &seg);
            const auto foot = required(child, "step", "foot", &seg);
            if (foot == "left") {
                step.foot = Foot::Left;
            } else if (foot == "right") {
                step.foot = Foot::Right;
            } else {
                fail(Errc::SchemaViolation, "step foot must be left or right, got '" + foot + "'" + context_of(&seg));
            }
            if (!seg.steps.empty() && step.t < seg.steps.back().t) {
                fail(Errc::OrderViolation, "step at " + format_double(step.t) + " s precedes the previous step at " +
                                               format_double(seg.steps.back().t) + " s" + context_of(&seg));
            }
            if (step.t < seg.start || step.t > seg.end) {
                fail(Errc::OrderViolation,
                     "step at " + format_double(step.t) + " s lies outside the segment bounds" + context_of(&seg));
            }
            seg.steps.push_back(step);
        } else if (key == "feature") {
            check_known_attributes(child, "feature", {"start", "end", "desc"});
            FeatureInterval feature;
            feature.start = required_seconds(child, "feature", "start", &seg);
            feature.end = required_seconds(child, "feature", "end", &seg);
            feature.description = attribute(child, "desc").value_or("");
            if (!(feature.start < feature.end)) {
                fail(Errc::SchemaViolation, "feature start must precede its end" + context_of(&seg));
            }
            seg.features.push_back(std::move(feature));
        } else if (key == "<xmltext>") {
            continue;
        } else {
            fail(Errc::SchemaViolation, "unexpected element <" + key + "> inside <segment>" + context_of(&seg));
        }
    }
    return seg;
}

void escape_into(std::string& out, std::string_view text)
{
    for (char ch : text) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out += ch;
        }
    }
}

void attr(std::string& out, std::string_view name, std::string_view value)
{
    out += ' ';
    out += name;
    out += "=\"";
    escape_into(out, value);
    out += '"';
}

}  // namespace

std::string_view to_string(Foot foot) { return foot == Foot::Left ? "left" : "right"; }

std::string_view to_string(SegmentKind kind) { return kind == SegmentKind::Straight ? "straight" : "turn"; }

std::string_view to_string(WalkerGroup group)
{
    switch (group) {
    case WalkerGroup::Sighted: return "sighted";
    case WalkerGroup::LongCane: return "long_cane";
    case WalkerGroup::GuideDog: return "guide_dog";
    }
    return "sighted";
}

WalkerGroup walker_group_from_string(std::string_view text)
{
    if (text == "sighted") return WalkerGroup::Sighted;
    if (text == "long_cane") return WalkerGroup::LongCane;
    if (text == "guide_dog") return WalkerGroup::GuideDog;
    fail(Errc::SchemaViolation, "walker group must be sighted, long_cane or guide_dog, got '" + std::string(text) + "'");
}

AnnotatedWalk parse_ground_truth_xml(std::string_view bytes)
{
    pt::ptree tree;
    try {
        std::istringstream in{std::string(bytes)};
        pt::read_xml(in, tree);
    } catch (const pt::xml_parser_error& e) {
        fail(Errc::SchemaViolation, std::string("malformed XML: ") + e.what());
    }

    const pt::ptree* root = nullptr;
    for (const auto& [key, child] : tree) {
        if (key == "<xmlcomment>") continue;
        if (key != "walk" || root) fail(Errc::SchemaViolation, "document root must be a single <walk> element");
        root = &child;
    }
    if (!root) fail(Errc::SchemaViolation, "document has no <walk> element");

    check_known_attributes(*root, "walk", {"participant", "path", "group"});
    AnnotatedWalk walk;
    walk.participant_id = required(*root, "walk", "participant");
    walk.path_id = required(*root, "walk", "path");
    walk.walker_group = walker_group_from_string(required(*root, "walk", "group"));

    for (const auto& [key, child] : *root) {
        if (is_markup_child(key) || key == "<xmltext>") continue;
        if (key != "segment") fail(Errc::SchemaViolation, "unexpected element <" + key + "> inside <walk>");
        Segment seg = parse_segment(child);
        if (!walk.segments.empty()) {
            const auto& prev = walk.segments.back();
            if (seg.start < prev.end) {
                fail(Errc::OrderViolation, "segment '" + seg.id + "' starts at " + format_double(seg.start) +
                                               " s, before segment '" + prev.id + "' ends at " + format_double(prev.end) +
                                               " s");
            }
        }
        walk.segments.push_back(std::move(seg));
    }
    if (walk.segments.empty()) {
        fail(Errc::EmptyWalk, "walk of participant " + walk.participant_id + " path " + walk.path_id + " has no segments");
    }
    return walk;
}

std::string to_canonical_xml(const AnnotatedWalk& walk)
{
    std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<walk";
    attr(out, "participant", walk.participant_id);
    attr(out, "path", walk.path_id);
    attr(out, "group", to_string(walk.walker_group));
    out += ">\n";
    for (const auto& seg : walk.segments) {
        out += "  <segment";
        attr(out, "id", seg.id);
        attr(out, "kind", to_string(seg.kind));
        attr(out, "start", format_double(seg.start));
        attr(out, "end", format_double(seg.end));
        attr(out, "direction", seg.direction);
        out += ">\n";
        for (const auto& step : seg.steps) {
            out += "    <step";
            attr(out, "t", format_double(step.t));
            attr(out, "foot", to_string(step.foot));
            out += "/>\n";
        }
        for (const auto& feature : seg.features) {
            out += "    <feature";
            attr(out, "start", format_double(feature.start));
            attr(out, "end", format_double(feature.end));
            attr(out, "desc", feature.description);
            out += "/>\n";
        }
        out += "  </segment>\n";
    }
    out += "</walk>\n";
    return out;
}

}  // namespace stepcount::ingest
