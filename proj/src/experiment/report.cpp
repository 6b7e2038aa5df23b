#include <cstdio>

#include <json.hpp>

#include "stepcount/error.hpp"
#include "stepcount/experiment.hpp"

namespace stepcount::experiment {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json report_json(const metrics::StepErrorReport& r)
{
    ordered_json j;
    for (std::size_t m = 0; m < 3; ++m) {
        j["metric" + std::to_string(m + 1)] = {
            {"under_events", r.metric[m].under_events},
            {"over_events", r.metric[m].over_events},
            {"under_rate", r.metric[m].under_rate},
            {"over_rate", r.metric[m].over_rate},
        };
    }
    j["total_steps"] = r.total_steps;
    j["total_predicted"] = r.total_predicted;
    j["signal_accuracy"] = r.signal_accuracy;
    j["accuracy_samples"] = r.accuracy_samples;
    j["segments"] = r.segments;
    j["skipped_segments"] = r.skipped_segments;
    j["metric1_pre_first_overcount"] = r.metric1_pre_first_overcount;
    j["metric1_tail_undercount"] = r.metric1_tail_undercount;
    return j;
}

metrics::StepErrorReport report_from(const json& j)
{
    metrics::StepErrorReport r;
    for (std::size_t m = 0; m < 3; ++m) {
        const auto& mj = j.at("metric" + std::to_string(m + 1));
        r.metric[m].under_events = mj.at("under_events").get<std::int64_t>();
        r.metric[m].over_events = mj.at("over_events").get<std::int64_t>();
        r.metric[m].under_rate = mj.at("under_rate").get<double>();
        r.metric[m].over_rate = mj.at("over_rate").get<double>();
    }
    r.total_steps = j.at("total_steps").get<std::int64_t>();
    r.total_predicted = j.value("total_predicted", std::int64_t{0});
    r.signal_accuracy = j.at("signal_accuracy").get<double>();
    r.accuracy_samples = j.value("accuracy_samples", std::int64_t{0});
    r.segments = j.value("segments", std::int64_t{0});
    r.skipped_segments = j.value("skipped_segments", std::int64_t{0});
    r.metric1_pre_first_overcount = j.value("metric1_pre_first_overcount", std::int64_t{0});
    r.metric1_tail_undercount = j.value("metric1_tail_undercount", std::int64_t{0});
    return r;
}

std::string percent(double fraction)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
    return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left_align = false)
{
    if (s.size() >= width) return s;
    return left_align ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

struct Column {
    std::string header;
    const metrics::StepErrorReport* report;
};

std::string render_table(const ExperimentResult& result)
{
    const bool with_valid = std::any_of(result.folds.begin(), result.folds.end(),
                                        [](const FoldResult& f) { return f.validation.has_value(); });
    const auto mean_test = mean_report(result.folds, false);
    const auto mean_valid = mean_report(result.folds, true);

    std::vector<Column> cols;
    for (const auto& f : result.folds) {
        if (with_valid) cols.push_back({f.name + " valid", f.validation ? &*f.validation : nullptr});
        cols.push_back({with_valid ? f.name + " test" : f.name, f.test ? &*f.test : nullptr});
    }
    if (with_valid) cols.push_back({"mean valid", mean_valid ? &*mean_valid : nullptr});
    cols.push_back({with_valid ? "mean test" : "mean", mean_test ? &*mean_test : nullptr});

    std::size_t width = 7;
    for (const auto& c : cols) width = std::max(width, c.header.size() + 1);
    const std::size_t label_width = 20;

    std::string out = result.group + " / " + result.protocol + " (rates in %)\n";
    out += pad("", label_width, true);
    for (const auto& c : cols) out += pad(c.header, width);
    out += '\n';
    auto row = [&](const std::string& label, auto&& value) {
        out += pad(label, label_width, true);
        for (const auto& c : cols) out += pad(c.report ? value(*c.report) : std::string("-"), width);
        out += '\n';
    };
    for (std::size_t m = 0; m < 3; ++m) {
        const std::string name = "metric" + std::to_string(m + 1);
        row(name + " undercount", [&](const metrics::StepErrorReport& r) { return percent(r.metric[m].under_rate); });
        row(name + " overcount", [&](const metrics::StepErrorReport& r) { return percent(r.metric[m].over_rate); });
    }
    row("signal accuracy", [](const metrics::StepErrorReport& r) { return percent(r.signal_accuracy); });
    row("ground-truth steps", [](const metrics::StepErrorReport& r) { return std::to_string(r.total_steps); });

    for (const auto& f : result.folds) {
        if (!f.error.empty()) out += f.name + " failed (" + f.error_code + "): " + f.error + "\n";
    }
    if (!result.candidates.empty()) {
        out += "model selection (mean validation metric-3 error):\n";
        for (std::size_t c = 0; c < result.candidates.size(); ++c) {
            out += (c == result.selected ? "  * " : "    ") + result.candidates[c].overrides + "  " +
                   percent(result.candidates[c].mean_validation_metric3) + "\n";
        }
    }
    return out;
}

std::string render_fold_csv(const ExperimentResult& result)
{
    std::string out = "fold,split,metric,under,over\n";
    auto emit = [&](const std::string& fold, const char* split, const metrics::StepErrorReport& r) {
        for (std::size_t m = 0; m < 3; ++m) {
            out += fold + ',' + split + ',' + std::to_string(m + 1) + ',' + ingest::format_double(r.metric[m].under_rate) +
                   ',' + ingest::format_double(r.metric[m].over_rate) + '\n';
        }
    };
    for (const auto& f : result.folds) {
        if (f.test) emit(f.name, "test", *f.test);
        if (f.validation) emit(f.name, "valid", *f.validation);
    }
    return out;
}

std::string render_loss_csv(const ExperimentResult& result)
{
    std::string out = "fold,step,loss\n";
    for (const auto& f : result.folds) {
        for (std::size_t s = 0; s < f.loss_trace.size(); ++s) {
            out += f.name + ',' + std::to_string(s) + ',' + ingest::format_double(f.loss_trace[s]) + '\n';
        }
    }
    return out;
}

}  // namespace

ReportFormat report_format_from_string(const std::string& text)
{
    if (text == "json") return ReportFormat::Json;
    if (text == "table") return ReportFormat::Table;
    if (text == "plotdata") return ReportFormat::PlotData;
    fail(Errc::InvalidConfig, "unknown report format '" + text + "' (expected json, table or plotdata)");
}

std::string report_to_json(const ExperimentResult& result)
{
    ordered_json j;
    j["protocol"] = result.protocol;
    j["group"] = result.group;
    j["config"] = result.config_json.empty() ? ordered_json::object() : ordered_json::parse(result.config_json);
    j["folds"] = ordered_json::array();
    for (const auto& f : result.folds) {
        ordered_json fj;
        fj["name"] = f.name;
        if (!f.test_participant.empty()) fj["test_participant"] = f.test_participant;
        if (!f.validation_participant.empty()) fj["validation_participant"] = f.validation_participant;
        fj["train_windows"] = f.train_windows;
        fj["test_windows"] = f.test_windows;
        fj["test"] = f.test ? report_json(*f.test) : ordered_json();
        if (f.validation) fj["validation"] = report_json(*f.validation);
        fj["error"] = f.error.empty() ? ordered_json() : ordered_json({{"code", f.error_code}, {"message", f.error}});
        fj["loss_trace"] = f.loss_trace;
        j["folds"].push_back(std::move(fj));
    }
    ordered_json mean;
    if (const auto m = mean_report(result.folds, false)) mean["test"] = report_json(*m);
    if (const auto m = mean_report(result.folds, true)) mean["validation"] = report_json(*m);
    j["mean"] = mean;
    if (!result.candidates.empty()) {
        ordered_json sel = ordered_json::array();
        for (const auto& c : result.candidates) {
            sel.push_back({{"overrides", ordered_json::parse(c.overrides)},
                           {"mean_validation_metric3", c.mean_validation_metric3}});
        }
        j["selection"] = {{"candidates", sel}, {"selected", result.selected}};
    }
    return j.dump(2) + "\n";
}

ExperimentResult report_from_json(const std::string& text)
{
    try {
        const auto j = ordered_json::parse(text);
        ExperimentResult r;
        r.protocol = j.at("protocol").get<std::string>();
        r.group = j.at("group").get<std::string>();
        if (j.contains("config")) r.config_json = j.at("config").dump();
        for (const auto& fj : j.at("folds")) {
            FoldResult f;
            f.name = fj.at("name").get<std::string>();
            f.test_participant = fj.value("test_participant", std::string());
            f.validation_participant = fj.value("validation_participant", std::string());
            f.train_windows = fj.value("train_windows", std::size_t{0});
            f.test_windows = fj.value("test_windows", std::size_t{0});
            if (fj.contains("test") && !fj.at("test").is_null()) f.test = report_from(fj.at("test"));
            if (fj.contains("validation") && !fj.at("validation").is_null()) f.validation = report_from(fj.at("validation"));
            if (fj.contains("error") && !fj.at("error").is_null()) {
                f.error_code = fj.at("error").at("code").get<std::string>();
                f.error = fj.at("error").at("message").get<std::string>();
            }
            if (fj.contains("loss_trace")) f.loss_trace = fj.at("loss_trace").get<std::vector<double>>();
            r.folds.push_back(std::move(f));
        }
        if (j.contains("selection")) {
            for (const auto& c : j.at("selection").at("candidates")) {
                r.candidates.push_back({c.at("overrides").dump(), c.at("mean_validation_metric3").get<double>()});
            }
            r.selected = j.at("selection").at("selected").get<std::size_t>();
        }
        return r;
    } catch (const json::exception& e) {
        fail(Errc::SchemaViolation, std::string("report JSON: ") + e.what());
    }
}

std::map<std::string, std::string> render_report(const ExperimentResult& result, ReportFormat format)
{
    if (result.folds.empty()) fail(Errc::EmptyReport, "no fold reports to render");
    switch (format) {
    case ReportFormat::Json: return {{"report.json", report_to_json(result)}};
    case ReportFormat::Table: return {{"report_table.txt", render_table(result)}};
    case ReportFormat::PlotData: return {{"folds.csv", render_fold_csv(result)}, {"loss.csv", render_loss_csv(result)}};
    }
    fail(Errc::InvalidConfig, "unknown report format");
}

std::vector<std::filesystem::path> write_report(const ExperimentResult& result, ReportFormat format,
                                                const std::filesystem::path& dir)
{
    const auto files = render_report(result, format);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(Errc::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> written;
    for (const auto& [name, contents] : files) {
        ingest::write_file(dir / name, contents);
        written.push_back(dir / name);
    }
    return written;
}

}  // namespace stepcount::experiment
