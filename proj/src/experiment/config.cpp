#include <algorithm>

#include <json.hpp>

#include "stepcount/error.hpp"
#include "stepcount/experiment.hpp"

namespace stepcount::experiment {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where)
{
    if (!j.is_object()) fail(Errc::InvalidConfig, where + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            fail(Errc::InvalidConfig, "unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& out)
{
    if (j.contains(key)) out = j.at(key).get<T>();
}

neural::TrainConfig apply_train(const json& j, neural::TrainConfig c)
{
    reject_unknown(j,
                   {"timesteps", "batch_size", "learning_rate", "training_steps", "hidden1", "hidden2", "hidden_sizes",
                    "dropout_rate", "seed", "beta1", "beta2", "epsilon", "loss_mode", "clip_norm"},
                   "train config");
    read(j, "timesteps", c.timesteps);
    read(j, "batch_size", c.batch_size);
    read(j, "learning_rate", c.learning_rate);
    read(j, "training_steps", c.training_steps);
    read(j, "hidden1", c.hidden1);
    read(j, "hidden2", c.hidden2);
    if (j.contains("hidden_sizes")) {
        const auto h = j.at("hidden_sizes").get<std::vector<neural::Index>>();
        if (h.size() != 2) fail(Errc::InvalidConfig, "hidden_sizes needs two entries");
        c.hidden1 = h[0];
        c.hidden2 = h[1];
    }
    read(j, "dropout_rate", c.dropout_rate);
    read(j, "seed", c.seed);
    read(j, "beta1", c.beta1);
    read(j, "beta2", c.beta2);
    read(j, "epsilon", c.epsilon);
    if (j.contains("loss_mode")) c.loss_mode = neural::loss_mode_from_string(j.at("loss_mode").get<std::string>());
    read(j, "clip_norm", c.clip_norm);
    return c;
}

ordered_json train_json(const neural::TrainConfig& c)
{
    ordered_json j;
    j["timesteps"] = c.timesteps;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["training_steps"] = c.training_steps;
    j["hidden1"] = c.hidden1;
    j["hidden2"] = c.hidden2;
    j["dropout_rate"] = c.dropout_rate;
    j["seed"] = c.seed;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["epsilon"] = c.epsilon;
    j["loss_mode"] = neural::to_string(c.loss_mode);
    j["clip_norm"] = c.clip_norm;
    return j;
}

std::string metric1_mode_name(metrics::Metric1Mode m)
{
    return m == metrics::Metric1Mode::ExtendToSpan ? "extend" : "strict";
}

}  // namespace

std::string to_string(Protocol p) { return p == Protocol::Mixed ? "mixed" : "leave_one_out"; }

Protocol protocol_from_string(const std::string& text)
{
    if (text == "mixed") return Protocol::Mixed;
    if (text == "leave_one_out") return Protocol::LeaveOneOut;
    fail(Errc::InvalidConfig, "unknown protocol '" + text + "' (expected mixed or leave_one_out)");
}

void ExperimentConfig::validate() const
{
    train.validate();
    postprocess.validate();
    if (protocol == Protocol::Mixed && folds < 2) fail(Errc::InvalidConfig, "mixed protocol needs folds >= 2");
    if (!(chunk_seconds > 0.0)) fail(Errc::InvalidConfig, "chunk_seconds must be > 0");
    if (held_test.empty()) fail(Errc::InvalidConfig, "held_test must name a participant or be \"all\"");
    if (!grid.empty() && !(protocol == Protocol::LeaveOneOut && validation)) {
        fail(Errc::InvalidConfig, "a model-selection grid needs the leave_one_out protocol with validation");
    }
    for (const auto& g : grid) train_config_from_json(g, train).validate();
}

neural::TrainConfig train_config_from_json(const std::string& text, neural::TrainConfig base)
{
    try {
        return apply_train(json::parse(text), base);
    } catch (const json::exception& e) {
        fail(Errc::InvalidConfig, std::string("train config: ") + e.what());
    }
}

std::string train_config_to_json(const neural::TrainConfig& config) { return train_json(config).dump(); }

ExperimentConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir)
{
    ExperimentConfig c;
    try {
        const auto j = json::parse(text);
        reject_unknown(j,
                       {"dataset_root", "group", "protocol", "folds", "held_test", "validation", "test_participants",
                        "train", "grid", "postprocess", "metric1_mode", "chunk_seconds", "seed", "output_dir",
                        "timestamp_column"},
                       "experiment config");
        auto resolve = [&](const std::string& p) {
            std::filesystem::path path(p);
            return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
        };
        if (j.contains("dataset_root")) c.dataset_root = resolve(j.at("dataset_root").get<std::string>());
        if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
        if (j.contains("group")) c.group = ingest::walker_group_from_string(j.at("group").get<std::string>());
        if (j.contains("protocol")) c.protocol = protocol_from_string(j.at("protocol").get<std::string>());
        read(j, "folds", c.folds);
        if (j.contains("held_test")) {
            const auto& h = j.at("held_test");
            c.held_test = h.is_string() ? h.get<std::string>() : h.dump();
        }
        read(j, "validation", c.validation);
        if (j.contains("test_participants")) {
            for (const auto& p : j.at("test_participants")) c.test_participants.push_back(p.is_string() ? p.get<std::string>() : p.dump());
        }
        if (j.contains("train")) c.train = apply_train(j.at("train"), c.train);
        if (j.contains("grid")) {
            for (const auto& g : j.at("grid")) {
                if (!g.is_object()) fail(Errc::InvalidConfig, "grid entries must be objects");
                c.grid.push_back(g.dump());
            }
        }
        if (j.contains("postprocess")) {
            const auto& p = j.at("postprocess");
            reject_unknown(p, {"threshold", "min_dwell"}, "postprocess config");
            read(p, "threshold", c.postprocess.threshold);
            read(p, "min_dwell", c.postprocess.min_dwell);
        }
        if (j.contains("metric1_mode")) {
            const auto m = j.at("metric1_mode").get<std::string>();
            if (m == "extend") c.metric1_mode = metrics::Metric1Mode::ExtendToSpan;
            else if (m == "strict") c.metric1_mode = metrics::Metric1Mode::StrictBetweenStrikes;
            else fail(Errc::InvalidConfig, "metric1_mode must be extend or strict");
        }
        read(j, "chunk_seconds", c.chunk_seconds);
        read(j, "seed", c.seed);
        read(j, "timestamp_column", c.timestamp_column);
    } catch (const json::exception& e) {
        fail(Errc::InvalidConfig, std::string("experiment config: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::InvalidConfig) throw;
        fail(Errc::InvalidConfig, e.detail());
    }
    c.validate();
    return c;
}

std::string config_to_json(const ExperimentConfig& c)
{
    ordered_json j;
    j["dataset_root"] = c.dataset_root.generic_string();
    j["group"] = std::string(ingest::to_string(c.group));
    j["protocol"] = to_string(c.protocol);
    j["folds"] = c.folds;
    j["held_test"] = c.held_test;
    j["validation"] = c.validation;
    j["test_participants"] = c.test_participants;
    j["train"] = train_json(c.train);
    j["grid"] = ordered_json::array();
    for (const auto& g : c.grid) j["grid"].push_back(ordered_json::parse(g));
    j["postprocess"] = {{"threshold", c.postprocess.threshold}, {"min_dwell", c.postprocess.min_dwell}};
    j["metric1_mode"] = metric1_mode_name(c.metric1_mode);
    j["chunk_seconds"] = c.chunk_seconds;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir.generic_string();
    j["timestamp_column"] = c.timestamp_column;
    return j.dump(2);
}

}  // namespace stepcount::experiment
