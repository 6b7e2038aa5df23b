#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>

#include "stepcount/error.hpp"
#include "stepcount/ingest.hpp"

namespace stepcount::ingest {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string_view unquote(std::string_view s)
{
    s = trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

std::optional<double> parse_number(std::string_view text)
{
    text = unquote(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
    return value;
}

}  // namespace

double median_sample_gap(const std::vector<SensorSample>& samples)
{
    if (samples.size() < 2) return 0.0;
    std::vector<double> gaps;
    gaps.reserve(samples.size() - 1);
    for (std::size_t k = 1; k < samples.size(); ++k) gaps.push_back(samples[k].t - samples[k - 1].t);
    const auto mid = gaps.size() / 2;
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(mid), gaps.end());
    const double upper = gaps[mid];
    if (gaps.size() % 2 == 1) return upper;
    const double lower = *std::max_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

std::string format_double(double value)
{
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

SensorSequence parse_sensor_csv(std::string_view bytes, std::string participant_id, std::string path_id,
                                const CsvOptions& options)
{
    if (bytes.starts_with("\xEF\xBB\xBF")) bytes.remove_prefix(3);

    std::vector<std::string_view> lines;
    for (std::size_t start = 0; start < bytes.size();) {
        auto nl = bytes.find('\n', start);
        if (nl == std::string_view::npos) nl = bytes.size();
        lines.push_back(bytes.substr(start, nl - start));
        start = nl + 1;
    }
    auto first = std::find_if(lines.begin(), lines.end(), [](std::string_view l) { return !trim(l).empty(); });
    if (first == lines.end()) fail(Errc::MissingColumn, "empty CSV: no header row");

    const auto header = split_fields(*first);
    auto column_of = [&](std::string_view name) -> std::size_t {
        for (std::size_t k = 0; k < header.size(); ++k) {
            if (unquote(header[k]) == name) return k;
        }
        fail(Errc::MissingColumn, "required column '" + std::string(name) + "' not found in header");
    };
    std::array<std::size_t, 7> columns{};
    columns[0] = column_of(options.timestamp_column);
    for (std::size_t k = 0; k < kChannelColumns.size(); ++k) columns[k + 1] = column_of(kChannelColumns[k]);
    const std::size_t needed = *std::max_element(columns.begin(), columns.end()) + 1;

    SensorSequence seq;
    seq.participant_id = std::move(participant_id);
    seq.path_id = std::move(path_id);

    for (auto it = std::next(first); it != lines.end(); ++it) {
        if (trim(*it).empty()) continue;
        const auto row_number = std::to_string(std::distance(lines.begin(), it) + 1);
        const auto fields = split_fields(*it);
        if (fields.size() < needed) {
            fail(Errc::MalformedRow, "line " + row_number + " has " + std::to_string(fields.size()) +
                                         " fields, expected at least " + std::to_string(needed));
        }
        std::array<double, 7> values{};
        for (std::size_t k = 0; k < columns.size(); ++k) {
            const auto v = parse_number(fields[columns[k]]);
            if (!v || !std::isfinite(*v)) {
                fail(Errc::MalformedRow, "line " + row_number + " column '" + std::string(unquote(header[columns[k]])) +
                                             "' is not a finite number: '" + std::string(trim(fields[columns[k]])) + "'");
            }
            values[k] = *v;
        }
        if (values[0] < 0.0) fail(Errc::MalformedRow, "line " + row_number + " has a negative timestamp");
        if (!seq.samples.empty() && values[0] <= seq.samples.back().t) {
            fail(Errc::NonMonotoneTime, "line " + row_number + " timestamp " + format_double(values[0]) +
                                            " does not increase past " + format_double(seq.samples.back().t));
        }
        seq.samples.push_back({values[0], {values[1], values[2], values[3]}, {values[4], values[5], values[6]}});
    }

    if (seq.samples.size() < 2) {
        fail(Errc::TooFewSamples, "sensor file for participant " + seq.participant_id + " path " + seq.path_id +
                                      " holds " + std::to_string(seq.samples.size()) + " samples, need at least 2");
    }
    seq.sample_period = median_sample_gap(seq.samples);
    return seq;
}

std::string to_sensor_csv(const SensorSequence& seq, const std::vector<std::string>& extra_columns,
                          const CsvOptions& options)
{
    std::string out = options.timestamp_column;
    for (auto name : kChannelColumns) {
        out += ',';
        out += name;
    }
    for (const auto& name : extra_columns) out += ',' + name;
    out += '\n';
    for (const auto& s : seq.samples) {
        out += format_double(s.t);
        for (std::size_t k = 0; k < 6; ++k) {
            out += ',';
            out += format_double(s.channel(k));
        }
        for (std::size_t k = 0; k < extra_columns.size(); ++k) out += ",0";
        out += '\n';
    }
    return out;
}

}  // namespace stepcount::ingest
