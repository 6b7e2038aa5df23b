#include "stepcount/cli.hpp"

#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "stepcount/error.hpp"
#include "stepcount/experiment.hpp"
#include "stepcount/log.hpp"
#include "stepcount/synth.hpp"

namespace stepcount::cli {

namespace fs = std::filesystem;

namespace {

int exit_code_for(Errc code)
{
    switch (code) {
    case Errc::InvalidConfig: return kExitUsage;
    case Errc::DivergedTraining: return kExitDiverged;
    default: return kExitData;
    }
}

experiment::ExperimentConfig load_config(const fs::path& path)
{
    return experiment::config_from_json(ingest::read_file(path), path.parent_path());
}

int cmd_synth(const fs::path& profiles, const fs::path& out_dir, std::ostream& out)
{
    const auto spec = synth::cohort_from_json(ingest::read_file(profiles));
    const auto stems = synth::generate_cohort(spec, out_dir);
    ingest::write_file(out_dir / "cohort.json", synth::cohort_to_json(spec));
    out << "wrote " << stems.size() << " walks (" << spec.participants.size() << " participants x " << spec.paths
        << " paths) to " << out_dir.string() << "\n";
    return kExitOk;
}

int cmd_check(const fs::path& data_dir, const std::string& timestamp_column, std::ostream& out)
{
    ingest::CsvOptions options;
    options.timestamp_column = timestamp_column;
    const auto records = ingest::load_dataset_dir(data_dir, options);
    if (records.empty()) fail(Errc::NoUsableData, "no annotation files under " + data_dir.string());

    struct Stats {
        std::size_t walks = 0, slices = 0, steps = 0, samples = 0;
        double seconds = 0.0;
        std::vector<std::string> participants;
    };
    std::map<std::string, Stats> per_group;
    for (const auto& rec : records) {
        auto& st = per_group[std::string(ingest::to_string(rec.walk.walker_group))];
        ++st.walks;
        st.participants.push_back(rec.walk.participant_id);
        try {
            for (const auto& slice : ingest::extract_usable_spans(rec.walk, rec.sensors)) {
                ++st.slices;
                st.steps += slice.steps.size();
                st.samples += slice.data.samples.size();
                st.seconds += slice.data.samples.back().t - slice.data.samples.front().t;
            }
        } catch (const Error& e) {
            fail(e.code(), rec.xml_path.filename().string() + ": " + e.detail());
        }
    }
    out << "group        walks participants slices  samples   seconds  steps\n";
    for (auto& [group, st] : per_group) {
        const auto people = dataset::distinct_participants(st.participants);
        char line[160];
        std::snprintf(line, sizeof(line), "%-12s %5zu %12zu %6zu %8zu %9.1f %6zu\n", group.c_str(), st.walks,
                      people.size(), st.slices, st.samples, st.seconds, st.steps);
        out << line;
    }
    return kExitOk;
}

int cmd_train(const fs::path& config_path, const fs::path& model_path, std::ostream& out)
{
    const auto config = load_config(config_path);
    const auto data = experiment::load_group(config);
    const auto& excluded = config.test_participants;
    const auto ranges = experiment::whole_slices(
        data.slices,
        [&](const dataset::LabeledSlice& s) {
            return std::find(excluded.begin(), excluded.end(), s.participant_id) == excluded.end();
        },
        config.train.timesteps);
    const auto refs = experiment::windows_in(ranges, config.train.timesteps);
    if (refs.empty()) fail(Errc::EmptyTrainSet, "no training windows after excluding the test participants");
    const auto trained = experiment::train_model(data.slices, refs, config.train, config.seed);
    neural::save_checkpoint(experiment::to_checkpoint(trained, config), model_path);
    out << "trained on " << refs.size() << " windows for " << trained.loss_trace.size()
        << " steps, final loss " << trained.loss_trace.back() << "; saved " << model_path.string() << "\n";
    return kExitOk;
}

int cmd_eval(const fs::path& config_path, const fs::path& model_path, const fs::path& out_path, std::ostream& out)
{
    const auto config = load_config(config_path);
    const auto data = experiment::load_group(config);
    const auto trained = experiment::from_checkpoint(neural::load_checkpoint(model_path));
    const auto& wanted = config.test_participants;
    const auto ranges = experiment::whole_slices(
        data.slices,
        [&](const dataset::LabeledSlice& s) {
            return wanted.empty() || std::find(wanted.begin(), wanted.end(), s.participant_id) != wanted.end();
        },
        config.train.timesteps);
    const auto evals = experiment::evaluate_ranges(trained.model, experiment::normalized(data.slices, trained.norm),
                                                   ranges, config.train.timesteps, config.postprocess);

    experiment::ExperimentResult result;
    result.protocol = "eval";
    result.group = std::string(ingest::to_string(config.group));
    experiment::FoldResult fold;
    fold.name = "eval";
    for (const auto& id : wanted) fold.test_participant += (fold.test_participant.empty() ? "" : ",") + id;
    fold.test_windows = experiment::windows_in(ranges, config.train.timesteps).size();
    fold.test = experiment::summarize(evals, config.metric1_mode);
    result.folds.push_back(std::move(fold));
    ingest::write_file(out_path, experiment::report_to_json(result));
    out << experiment::render_report(result, experiment::ReportFormat::Table).at("report_table.txt");
    return kExitOk;
}

int cmd_experiment(const fs::path& config_path, std::ostream& out, std::ostream& err)
{
    const auto config = load_config(config_path);
    const auto result = experiment::run_experiment(config);
    for (auto format : {experiment::ReportFormat::Json, experiment::ReportFormat::Table, experiment::ReportFormat::PlotData}) {
        experiment::write_report(result, format, config.output_dir);
    }
    out << experiment::render_report(result, experiment::ReportFormat::Table).at("report_table.txt");
    int code = kExitOk;
    for (const auto& f : result.folds) {
        if (f.error.empty()) continue;
        err << "[error] fold " << f.name << " failed: " << f.error << "\n";
        const int c = exit_code_for(errc_from_name(f.error_code).value_or(Errc::DivergedTraining));
        code = std::max(code, c);
    }
    return code;
}

int cmd_report(const fs::path& in, const std::string& format, const fs::path& out_dir, std::ostream& out)
{
    const auto result = experiment::report_from_json(ingest::read_file(in));
    const auto fmt = experiment::report_format_from_string(format);
    if (!out_dir.empty()) {
        for (const auto& p : experiment::write_report(result, fmt, out_dir)) out << "wrote " << p.string() << "\n";
        return kExitOk;
    }
    const auto files = experiment::render_report(result, fmt);
    for (const auto& [name, contents] : files) {
        if (files.size() > 1) out << "# " << name << "\n";
        out << contents;
    }
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Step counting from smartphone inertial data with a two-layer LSTM", "stepcount"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "debug, info, warn, error or off")
        ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

    fs::path profiles, out_dir, data_dir, config_path, model_path, out_path, in_path;
    std::string timestamp_column = "timestamp";
    std::string format = "table";

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort");
    synth_cmd->add_option("--profiles", profiles, "cohort JSON")->required();
    synth_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* check_cmd = app.add_subcommand("check", "parse a dataset and print usable-span statistics");
    check_cmd->add_option("--data", data_dir, "dataset directory")->required();
    check_cmd->add_option("--timestamp-column", timestamp_column, "timestamp column name");

    auto* train_cmd = app.add_subcommand("train", "train one model on a group");
    train_cmd->add_option("--config", config_path, "experiment config JSON")->required();
    train_cmd->add_option("--out", model_path, "checkpoint path")->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--config", config_path, "experiment config JSON")->required();
    eval_cmd->add_option("--model", model_path, "checkpoint path")->required();
    eval_cmd->add_option("--out", out_path, "report JSON path")->required();

    auto* exp_cmd = app.add_subcommand("experiment", "run the configured protocol");
    exp_cmd->add_option("--config", config_path, "experiment config JSON")->required();

    auto* report_cmd = app.add_subcommand("report", "render a report JSON");
    report_cmd->add_option("--in", in_path, "report JSON")->required();
    report_cmd->add_option("--format", format, "json, table or plotdata")
        ->check(CLI::IsMember({"json", "table", "plotdata"}));
    report_cmd->add_option("--out", out_dir, "write files here instead of standard output");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "[error] " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    const std::map<std::string, log::Level> levels{{"debug", log::Level::Debug}, {"info", log::Level::Info},
                                                   {"warn", log::Level::Warn},   {"error", log::Level::Error},
                                                   {"off", log::Level::Off}};
    log::set_level(levels.at(log_level));

    try {
        if (*synth_cmd) return cmd_synth(profiles, out_dir, out);
        if (*check_cmd) return cmd_check(data_dir, timestamp_column, out);
        if (*train_cmd) return cmd_train(config_path, model_path, out);
        if (*eval_cmd) return cmd_eval(config_path, model_path, out_path, out);
        if (*exp_cmd) return cmd_experiment(config_path, out, err);
        if (*report_cmd) return cmd_report(in_path, format, out_dir, out);
    } catch (const Error& e) {
        err << "[error] " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "[error] " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

int cli_main(int argc, char** argv)
{
    std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace stepcount::cli
