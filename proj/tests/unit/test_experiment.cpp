#include <doctest.h>

#include <sstream>

#include "stepcount/cli.hpp"
#include "stepcount/error.hpp"
#include "stepcount/experiment.hpp"
#include "stepcount/synth.hpp"
#include "test_support.hpp"

using namespace stepcount;
using namespace stepcount::experiment;

namespace {

Errc code_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::IoFailure;
}

struct Fixture {
    testsupport::TempDir dir{"experiment"};
    ExperimentConfig config;

    explicit Fixture(const std::string& group = "sighted", int count = 3)
    {
        const auto spec = synth::cohort_from_json(R"({"group": ")" + group + R"(", "count": )" +
                                                  std::to_string(count) +
                                                  R"(, "paths": 2, "duration_s": 20, "seed": 5})");
        synth::generate_cohort(spec, dir.path() / "data");
        config.dataset_root = dir.path() / "data";
        config.group = ingest::walker_group_from_string(group);
        config.output_dir = dir.path() / "out";
        config.train.timesteps = 10;
        config.train.batch_size = 32;
        config.train.hidden1 = 8;
        config.train.hidden2 = 6;
        config.train.training_steps = 15;
        config.chunk_seconds = 4.0;
    }
};

}  // namespace

TEST_CASE("config json: defaults, paths, unknown keys")
{
    const auto c = config_from_json(R"({"dataset_root": "data", "group": "long_cane", "protocol": "leave_one_out",
        "held_test": 8, "validation": true, "train": {"training_steps": 5, "hidden_sizes": [16, 8]},
        "postprocess": {"threshold": 0.4}, "metric1_mode": "strict", "output_dir": "o"})",
                                    "/base");
    CHECK(c.dataset_root == std::filesystem::path("/base/data"));
    CHECK(c.output_dir == std::filesystem::path("/base/o"));
    CHECK(c.group == ingest::WalkerGroup::LongCane);
    CHECK(c.protocol == Protocol::LeaveOneOut);
    CHECK(c.held_test == "8");
    CHECK(c.validation);
    CHECK(c.train.training_steps == 5);
    CHECK(c.train.hidden1 == 16);
    CHECK(c.train.hidden2 == 8);
    CHECK(c.train.timesteps == 50);
    CHECK(c.postprocess.threshold == 0.4);
    CHECK(c.metric1_mode == metrics::Metric1Mode::StrictBetweenStrikes);
    const auto again = config_from_json(config_to_json(c));
    CHECK(again.train.hidden1 == 16);
    CHECK(again.held_test == "8");

    CHECK(code_of([] { config_from_json(R"({"colour": 1})"); }) == Errc::InvalidConfig);
    CHECK(code_of([] { config_from_json(R"({"train": {"learning_rate": 0}})"); }) == Errc::InvalidConfig);
    CHECK(code_of([] { config_from_json(R"({"folds": 1})"); }) == Errc::InvalidConfig);
    CHECK(code_of([] { config_from_json("{"); }) == Errc::InvalidConfig);
}

TEST_CASE("chunks cover each slice without overlap")
{
    Rng rng(1);
    std::vector<dataset::LabeledSlice> slices(3);
    const dataset::Index lens[3] = {30, 251, 8};
    for (int s = 0; s < 3; ++s) {
        slices[s].inputs = Eigen::MatrixXd::Zero(lens[s], 6);
        for (dataset::Index i = 0; i < lens[s]; ++i) slices[s].times.push_back(0.04 * static_cast<double>(i));
        slices[s].labels.assign(static_cast<std::size_t>(lens[s]), 0);
    }
    const auto chunks = make_chunks(slices, 10, 2.0);
    std::vector<int> covered(251, 0);
    dataset::Index min_len = 1000;
    for (const auto& c : chunks) {
        CHECK(c.slice != 2);
        if (c.slice == 1) {
            for (auto i = c.first; i <= c.last; ++i) ++covered[static_cast<std::size_t>(i)];
        }
        min_len = std::min(min_len, c.last - c.first + 1);
    }
    CHECK(min_len >= 10);
    for (int i = 0; i < 251; ++i) CHECK(covered[static_cast<std::size_t>(i)] == 1);
    // every window of every chunk ends inside that chunk and starts inside the slice
    for (const auto& w : windows_in(chunks, 10)) CHECK(w.end_index >= 9);
}

TEST_CASE("mixed protocol: k=2 smoke run and determinism")
{
    Fixture fx;
    fx.config.folds = 2;
    const auto a = run_experiment(fx.config);
    REQUIRE(a.folds.size() == 2);
    for (const auto& f : a.folds) {
        CHECK(f.error.empty());
        REQUIRE(f.test);
        CHECK(f.test->total_steps > 0);
        CHECK(f.loss_trace.size() == 15);
    }
    CHECK(a.folds[0].name == "cv0");
    const auto b = run_experiment(fx.config);
    CHECK(report_to_json(a) == report_to_json(b));

    const auto files = render_report(a, ReportFormat::PlotData);
    const auto& loss = files.at("loss.csv");
    CHECK(std::count(loss.begin(), loss.end(), '\n') == 1 + 2 * 15);
    const auto table = render_report(a, ReportFormat::Table).at("report_table.txt");
    CHECK(table.find("metric3 undercount") != std::string::npos);
    CHECK(table.find("cv1") != std::string::npos);
    CHECK(report_to_json(report_from_json(report_to_json(a))) == report_to_json(a));
}

TEST_CASE("leave-one-out: one validation rotation and rotation count")
{
    Fixture fx("guide_dog", 3);
    fx.config.protocol = Protocol::LeaveOneOut;
    fx.config.held_test = "3";
    fx.config.validation = true;
    const auto r = run_experiment(fx.config);
    REQUIRE(r.folds.size() == 2);
    for (const auto& f : r.folds) {
        CHECK(f.test_participant == "3");
        CHECK(f.validation_participant != "3");
        CHECK(f.test);
        CHECK(f.validation);
    }
    const auto table = render_report(r, ReportFormat::Table).at("report_table.txt");
    CHECK(table.find("cv0 valid") != std::string::npos);
    CHECK(table.find("mean test") != std::string::npos);

    fx.config.validation = false;
    fx.config.held_test = "all";
    CHECK(run_experiment(fx.config).folds.size() == 3);

    fx.config.held_test = "9";
    CHECK(code_of([&] { run_experiment(fx.config); }) == Errc::UnknownParticipant);
}

TEST_CASE("leave-one-out grid selects by validation error")
{
    Fixture fx("sighted", 3);
    fx.config.protocol = Protocol::LeaveOneOut;
    fx.config.held_test = "1";
    fx.config.validation = true;
    fx.config.grid = {R"({"training_steps": 1, "learning_rate": 1e-6})", R"({"training_steps": 40})"};
    const auto r = run_experiment(fx.config);
    REQUIRE(r.candidates.size() == 2);
    CHECK(r.selected == 1);
    CHECK(r.candidates[1].mean_validation_metric3 <= r.candidates[0].mean_validation_metric3);
    CHECK(r.folds.front().loss_trace.size() == 40);
}

TEST_CASE("single participant cannot run leave-one-out")
{
    Fixture fx("sighted", 1);
    fx.config.protocol = Protocol::LeaveOneOut;
    CHECK(code_of([&] { run_experiment(fx.config); }) == Errc::SingleParticipant);
}

TEST_CASE("group isolation: other groups' files are never read")
{
    Fixture fx("sighted", 2);
    // a long-cane walk whose sensor file is garbage
    auto walk = ingest::parse_ground_truth_xml(
        ingest::read_file(fx.config.dataset_root / (ingest::walk_file_stem("1", "1") + ".xml")));
    walk.participant_id = "77";
    walk.walker_group = ingest::WalkerGroup::LongCane;
    ingest::write_file(fx.config.dataset_root / (ingest::walk_file_stem("77", "1") + ".xml"),
                       ingest::to_canonical_xml(walk));
    ingest::write_file(fx.config.dataset_root / (ingest::walk_file_stem("77", "1") + ".csv"), "garbage\n");
    const auto data = load_group(fx.config);
    CHECK(data.participants == std::vector<std::string>{"1", "2"});
    fx.config.group = ingest::WalkerGroup::LongCane;
    CHECK(code_of([&] { load_group(fx.config); }) == Errc::MissingColumn);
}

TEST_CASE("normalization is fitted on training windows only")
{
    Fixture fx("sighted", 2);
    auto data = load_group(fx.config);
    const dataset::Index T = fx.config.train.timesteps;
    const auto train = whole_slices(data.slices, [](const dataset::LabeledSlice& s) { return s.participant_id == "1"; }, T);
    const auto refs = windows_in(train, T);
    auto poisoned = data.slices;
    for (auto& s : poisoned) {
        if (s.participant_id == "2") s.inputs.setConstant(1e6);
    }
    auto cfg = fx.config.train;
    cfg.training_steps = 2;
    const auto a = train_model(data.slices, refs, cfg, 1);
    const auto b = train_model(poisoned, refs, cfg, 1);
    CHECK(a.norm.mean == b.norm.mean);
    CHECK(a.norm.stddev == b.norm.stddev);
    CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("empty report is an error")
{
    ExperimentResult empty;
    CHECK(code_of([&] { render_report(empty, ReportFormat::Json); }) == Errc::EmptyReport);
    testsupport::TempDir dir("empty_report");
    CHECK(code_of([&] { write_report(empty, ReportFormat::Table, dir.path() / "x"); }) == Errc::EmptyReport);
    CHECK_FALSE(std::filesystem::exists(dir.path() / "x"));
}

TEST_CASE("checkpoint carries normalization")
{
    Fixture fx;
    TrainedModel t{neural::LstmModel::initialized(fx.config.train.shape(), 0.2, 1), {}, {0.5, 0.25}};
    t.norm.mean = {1, 2, 3, 4, 5, 6};
    t.norm.stddev = {1, 1, 2, 2, 3, 3};
    const auto back = from_checkpoint(to_checkpoint(t, fx.config));
    CHECK(back.norm.mean == t.norm.mean);
    CHECK(back.norm.stddev == t.norm.stddev);
    CHECK(back.loss_trace == t.loss_trace);
}

TEST_CASE("cli exit codes")
{
    std::ostringstream out, err;
    SUBCASE("unknown flag is a usage error")
    {
        CHECK(cli::run({"check", "--data", "nowhere", "--bogus"}, out, err) == cli::kExitUsage);
        CHECK(err.str().find("--bogus") != std::string::npos);
        CHECK(cli::run({}, out, err) == cli::kExitUsage);
    }
    SUBCASE("missing channel column is a data error naming the column")
    {
        Fixture fx("sighted", 2);
        const auto csv = fx.config.dataset_root / (ingest::walk_file_stem("2", "1") + ".csv");
        auto text = ingest::read_file(csv);
        text.replace(text.find("rotationRateZ"), 13, "rotationRateQ");
        ingest::write_file(csv, text);
        CHECK(cli::run({"check", "--data", fx.config.dataset_root.string()}, out, err) == cli::kExitData);
        CHECK(err.str().find("rotationRateZ") != std::string::npos);
    }
    SUBCASE("synth, check, train, eval, experiment, report")
    {
        testsupport::TempDir dir("cli");
        const auto profiles = dir.path() / "profiles.json";
        ingest::write_file(profiles, R"({"group": "sighted", "count": 3, "paths": 2, "duration_s": 15})");
        REQUIRE(cli::run({"synth", "--profiles", profiles.string(), "--out", (dir.path() / "data").string()}, out,
                         err) == cli::kExitOk);
        CHECK(cli::run({"check", "--data", (dir.path() / "data").string()}, out, err) == cli::kExitOk);
        CHECK(out.str().find("sighted") != std::string::npos);

        const auto config = dir.path() / "c.json";
        ingest::write_file(config, R"({"dataset_root": "data", "group": "sighted", "folds": 2, "output_dir": "out",
            "test_participants": ["3"], "chunk_seconds": 4,
            "train": {"timesteps": 10, "batch_size": 16, "hidden_sizes": [6, 4], "training_steps": 5}})");
        const auto model = (dir.path() / "m.ckpt").string();
        REQUIRE(cli::run({"train", "--config", config.string(), "--out", model}, out, err) == cli::kExitOk);
        const auto report = (dir.path() / "eval.json").string();
        REQUIRE(cli::run({"eval", "--config", config.string(), "--model", model, "--out", report}, out, err) ==
                cli::kExitOk);
        CHECK(report_from_json(ingest::read_file(report)).folds.at(0).test_participant == "3");
        CHECK(cli::run({"eval", "--config", config.string(), "--model", config.string(), "--out", report}, out, err) ==
              cli::kExitData);

        REQUIRE(cli::run({"experiment", "--config", config.string()}, out, err) == cli::kExitOk);
        for (const char* f : {"report.json", "report_table.txt", "folds.csv", "loss.csv"}) {
            CHECK(std::filesystem::exists(dir.path() / "out" / f));
        }
        std::ostringstream table;
        CHECK(cli::run({"report", "--in", (dir.path() / "out" / "report.json").string(), "--format", "table"}, table,
                       err) == cli::kExitOk);
        CHECK(table.str().find("metric1 undercount") != std::string::npos);
        CHECK(cli::run({"report", "--in", (dir.path() / "out" / "report.json").string(), "--format", "pie"}, out,
                       err) == cli::kExitUsage);
    }
    SUBCASE("bad config is a usage error")
    {
        testsupport::TempDir dir("cli_cfg");
        ingest::write_file(dir.path() / "c.json", R"({"folds": "many"})");
        CHECK(cli::run({"experiment", "--config", (dir.path() / "c.json").string()}, out, err) == cli::kExitUsage);
    }
}
