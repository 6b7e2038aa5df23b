#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "stepcount/dataset.hpp"
#include "stepcount/error.hpp"
#include "stepcount/experiment.hpp"
#include "stepcount/ingest.hpp"
#include "stepcount/labeling.hpp"
#include "stepcount/log.hpp"
#include "stepcount/metrics.hpp"
#include "stepcount/neural.hpp"
#include "stepcount/postprocess.hpp"
#include "stepcount/synth.hpp"

namespace py = pybind11;
using namespace stepcount;

namespace {

std::vector<double> times_of(const ingest::SensorSequence& seq)
{
    std::vector<double> t;
    t.reserve(seq.samples.size());
    for (const auto& s : seq.samples) t.push_back(s.t);
    return t;
}

ingest::Foot foot_from(const std::string& s)
{
    if (s == "left" || s == "L") return ingest::Foot::Left;
    if (s == "right" || s == "R") return ingest::Foot::Right;
    throw py::value_error("foot must be 'left' or 'right'");
}

std::vector<ingest::StepEvent> steps_from(const std::vector<std::pair<double, std::string>>& steps)
{
    std::vector<ingest::StepEvent> out;
    for (const auto& [t, f] : steps) out.push_back({t, foot_from(f)});
    return out;
}

metrics::SegmentEval segment_eval(std::vector<double> truth, std::vector<double> predicted, double lo, double hi)
{
    metrics::SegmentEval e;
    e.ground_truth = std::move(truth);
    e.predicted = std::move(predicted);
    e.span_start = lo;
    e.span_end = hi;
    return e;
}

metrics::Metric1Mode metric1_mode(const std::string& mode)
{
    if (mode == "extend") return metrics::Metric1Mode::ExtendToSpan;
    if (mode == "strict") return metrics::Metric1Mode::StrictBetweenStrikes;
    throw py::value_error("mode must be 'extend' or 'strict'");
}

py::tuple counts(const metrics::EventCounts& c) { return py::make_tuple(c.under, c.over); }

}  // namespace

PYBIND11_MODULE(_stepcount, m)
{
    m.doc() = "Step counting from smartphone inertial data with a two-layer LSTM";

    static py::exception<Error> error_type(m, "StepcountError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
            exc.attr("code") = std::string(errc_name(e.code()));
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    m.def("set_log_level", [](const std::string& level) {
        static const std::map<std::string, log::Level> levels{{"debug", log::Level::Debug}, {"info", log::Level::Info},
                                                              {"warn", log::Level::Warn},   {"error", log::Level::Error},
                                                              {"off", log::Level::Off}};
        const auto it = levels.find(level);
        if (it == levels.end()) throw py::value_error("unknown log level");
        log::set_level(it->second);
    });

    // ingest
    py::class_<ingest::SensorSequence>(m, "SensorSequence")
        .def_readonly("participant_id", &ingest::SensorSequence::participant_id)
        .def_readonly("path_id", &ingest::SensorSequence::path_id)
        .def_readonly("sample_period", &ingest::SensorSequence::sample_period)
        .def_property_readonly("times", &times_of)
        .def_property_readonly("channels", &dataset::channel_matrix)
        .def("__len__", [](const ingest::SensorSequence& s) { return s.samples.size(); })
        .def("to_csv", [](const ingest::SensorSequence& s) { return ingest::to_sensor_csv(s); });

    py::class_<ingest::Segment>(m, "Segment")
        .def_readonly("id", &ingest::Segment::id)
        .def_property_readonly("kind", [](const ingest::Segment& s) { return std::string(ingest::to_string(s.kind)); })
        .def_readonly("start", &ingest::Segment::start)
        .def_readonly("end", &ingest::Segment::end)
        .def_readonly("direction", &ingest::Segment::direction)
        .def_property_readonly("steps",
                               [](const ingest::Segment& s) {
                                   std::vector<std::pair<double, std::string>> out;
                                   for (const auto& st : s.steps) out.emplace_back(st.t, std::string(ingest::to_string(st.foot)));
                                   return out;
                               })
        .def_property_readonly("features", [](const ingest::Segment& s) {
            std::vector<std::tuple<double, double, std::string>> out;
            for (const auto& f : s.features) out.emplace_back(f.start, f.end, f.description);
            return out;
        });

    py::class_<ingest::AnnotatedWalk>(m, "AnnotatedWalk")
        .def_readonly("participant_id", &ingest::AnnotatedWalk::participant_id)
        .def_readonly("path_id", &ingest::AnnotatedWalk::path_id)
        .def_property_readonly("walker_group",
                               [](const ingest::AnnotatedWalk& w) { return std::string(ingest::to_string(w.walker_group)); })
        .def_readonly("segments", &ingest::AnnotatedWalk::segments)
        .def("to_xml", [](const ingest::AnnotatedWalk& w) { return ingest::to_canonical_xml(w); })
        .def("__eq__", [](const ingest::AnnotatedWalk& a, const ingest::AnnotatedWalk& b) { return a == b; });

    py::class_<ingest::UsableSlice>(m, "UsableSlice")
        .def_property_readonly("id", &ingest::UsableSlice::id)
        .def_readonly("span_start", &ingest::UsableSlice::span_start)
        .def_readonly("span_end", &ingest::UsableSlice::span_end)
        .def_readonly("data", &ingest::UsableSlice::data)
        .def_property_readonly("step_times", [](const ingest::UsableSlice& s) {
            std::vector<double> t;
            for (const auto& st : s.steps) t.push_back(st.t);
            return t;
        });

    m.def(
        "parse_sensor_csv",
        [](const std::string& text, std::string participant, std::string path, std::string timestamp_column) {
            ingest::CsvOptions o;
            o.timestamp_column = std::move(timestamp_column);
            return ingest::parse_sensor_csv(text, std::move(participant), std::move(path), o);
        },
        py::arg("text"), py::arg("participant_id"), py::arg("path_id"), py::arg("timestamp_column") = "timestamp");
    m.def("parse_ground_truth_xml", [](const std::string& text) { return ingest::parse_ground_truth_xml(text); });
    m.def("extract_usable_spans", &ingest::extract_usable_spans, py::arg("walk"), py::arg("sequence"));

    // labeling / postprocess
    m.def(
        "build_square_wave",
        [](const std::vector<std::pair<double, std::string>>& steps, const std::vector<double>& times) {
            return labeling::build_square_wave(steps_from(steps), times).values;
        },
        py::arg("steps"), py::arg("times"), "steps: list of (t, 'left'|'right')");
    m.def(
        "signal_to_steps",
        [](std::vector<double> times, std::vector<std::uint8_t> values) {
            return labeling::signal_to_steps({std::move(times), std::move(values)});
        },
        py::arg("times"), py::arg("values"));
    m.def(
        "binarize",
        [](const std::vector<double>& values, double threshold) {
            return postprocess::binarize(values, postprocess::PostprocessConfig{threshold, 0});
        },
        py::arg("values"), py::arg("threshold") = 0.5);
    m.def(
        "predicted_steps",
        [](const std::vector<double>& values, const std::vector<double>& times, double threshold) {
            return postprocess::predicted_steps(values, times, postprocess::PostprocessConfig{threshold, 0});
        },
        py::arg("values"), py::arg("times"), py::arg("threshold") = 0.5);
    m.def("signal_accuracy", [](const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
        return postprocess::signal_accuracy(a, b);
    });

    // metrics
    m.def(
        "metric1",
        [](std::vector<double> truth, std::vector<double> predicted, double lo, double hi, const std::string& mode) {
            return counts(metrics::metric1(segment_eval(std::move(truth), std::move(predicted), lo, hi), metric1_mode(mode)));
        },
        py::arg("ground_truth"), py::arg("predicted"), py::arg("span_start"), py::arg("span_end"),
        py::arg("mode") = "extend", "(undercount, overcount) events");
    m.def(
        "metric2",
        [](std::vector<double> truth, std::vector<double> predicted, double lo, double hi) {
            return counts(metrics::metric2(segment_eval(std::move(truth), std::move(predicted), lo, hi)));
        },
        py::arg("ground_truth"), py::arg("predicted"), py::arg("span_start"), py::arg("span_end"));
    m.def(
        "metric3",
        [](std::vector<double> truth, std::vector<double> predicted) {
            return counts(metrics::metric3(segment_eval(std::move(truth), std::move(predicted), 0.0, 0.0)));
        },
        py::arg("ground_truth"), py::arg("predicted"));

    // neural
    py::class_<neural::LstmModel>(m, "LstmModel")
        .def_static(
            "initialized",
            [](neural::Index input, neural::Index h1, neural::Index h2, double dropout, std::uint64_t seed) {
                return neural::LstmModel::initialized({input, h1, h2}, dropout, seed);
            },
            py::arg("input") = 6, py::arg("hidden1") = 64, py::arg("hidden2") = 64, py::arg("dropout_rate") = 0.0,
            py::arg("seed") = 1)
        .def_property_readonly("shape",
                               [](const neural::LstmModel& mdl) {
                                   return py::make_tuple(mdl.shape().input, mdl.shape().hidden1, mdl.shape().hidden2);
                               })
        .def_property_readonly("dropout_rate", &neural::LstmModel::dropout_rate)
        .def_property(
            "parameters",
            [](const neural::LstmModel& mdl) {
                const auto p = mdl.parameters();
                return std::vector<double>(p.begin(), p.end());
            },
            [](neural::LstmModel& mdl, const std::vector<double>& values) {
                auto p = mdl.mutable_parameters();
                if (values.size() != p.size()) throw py::value_error("parameter count mismatch");
                std::copy(values.begin(), values.end(), p.begin());
            })
        .def("forward", [](const neural::LstmModel& mdl, const Eigen::MatrixXd& window) {
            return Eigen::VectorXd(neural::lstm_forward(mdl, window));
        }, "per-step outputs of one window (timesteps x inputs), inference mode")
        .def("predict_slice", [](const neural::LstmModel& mdl, const Eigen::MatrixXd& slice, neural::Index timesteps) {
            return neural::predict_slice(mdl, slice, timesteps);
        }, py::arg("slice"), py::arg("timesteps") = 50);

    m.def(
        "train_windows",
        [](neural::LstmModel& model, const std::vector<Eigen::MatrixXd>& windows,
           const std::vector<std::vector<double>>& targets, std::uint64_t steps, double learning_rate,
           const std::string& loss_mode, std::uint64_t seed) {
            if (windows.empty() || windows.size() != targets.size()) throw py::value_error("windows/targets mismatch");
            neural::SequenceBatch batch;
            batch.inputs = neural::stack_windows(windows);
            const auto T = windows.front().rows();
            batch.targets.resize(T, static_cast<neural::Index>(windows.size()));
            for (std::size_t j = 0; j < targets.size(); ++j) {
                if (static_cast<neural::Index>(targets[j].size()) != T) throw py::value_error("target length differs from window");
                for (neural::Index t = 0; t < T; ++t) batch.targets(t, static_cast<neural::Index>(j)) = targets[j][static_cast<std::size_t>(t)];
            }
            neural::TrainConfig cfg;
            cfg.timesteps = T;
            cfg.batch_size = static_cast<neural::Index>(windows.size());
            cfg.training_steps = steps;
            cfg.learning_rate = learning_rate;
            cfg.loss_mode = neural::loss_mode_from_string(loss_mode);
            cfg.hidden1 = model.shape().hidden1;
            cfg.hidden2 = model.shape().hidden2;
            cfg.dropout_rate = model.dropout_rate();
            cfg.seed = seed;
            py::gil_scoped_release release;
            return neural::train(model, [&](std::uint64_t) { return batch; }, cfg).loss_trace;
        },
        py::arg("model"), py::arg("windows"), py::arg("targets"), py::arg("steps"), py::arg("learning_rate") = 0.01,
        py::arg("loss_mode") = "last_output", py::arg("seed") = 1,
        "Full-batch Adam training on the given windows; returns the loss trace.");

    m.def("save_checkpoint", [](const neural::LstmModel& model, const std::filesystem::path& path) {
        neural::save_checkpoint({model, std::nullopt, {}, {}}, path);
    });
    m.def("load_checkpoint", [](const std::filesystem::path& path) { return neural::load_checkpoint(path).model; });

    // synth
    m.def(
        "generate_walk",
        [](const std::string& profile, double duration, double sample_rate, std::uint64_t seed) {
            auto w = synth::generate_walk(synth::preset(profile), duration, sample_rate, seed);
            return py::make_tuple(w.sensors, w.walk);
        },
        py::arg("profile") = "sighted", py::arg("duration") = 60.0, py::arg("sample_rate") = 25.0, py::arg("seed") = 1);
    m.def(
        "generate_cohort",
        [](const std::string& cohort_json, const std::filesystem::path& out_dir) {
            return synth::generate_cohort(synth::cohort_from_json(cohort_json), out_dir);
        },
        py::arg("cohort_json"), py::arg("out_dir"));

    // experiment
    m.def(
        "run_experiment",
        [](const std::string& config_json, const std::filesystem::path& base_dir) {
            const auto config = experiment::config_from_json(config_json, base_dir);
            experiment::ExperimentResult result;
            {
                py::gil_scoped_release release;
                result = experiment::run_experiment(config);
            }
            return experiment::report_to_json(result);
        },
        py::arg("config_json"), py::arg("base_dir") = std::filesystem::path{}, "Runs a protocol; returns the report JSON.");
    m.def(
        "render_report",
        [](const std::string& report_json, const std::string& format) {
            return experiment::render_report(experiment::report_from_json(report_json),
                                             experiment::report_format_from_string(format));
        },
        py::arg("report_json"), py::arg("format") = "table");
}
