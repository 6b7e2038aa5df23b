#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "stepcount/error.hpp"
#include "stepcount/experiment.hpp"
#include "stepcount/log.hpp"

namespace stepcount::experiment {

namespace {

using dataset::Index;
using dataset::LabeledSlice;
using dataset::WindowRef;

constexpr std::uint64_t kBatchStream = 0xB0;
constexpr std::uint64_t kInitStream = 0x11;

double median_gap(const std::vector<double>& times)
{
    std::vector<double> gaps;
    for (std::size_t k = 1; k < times.size(); ++k) gaps.push_back(times[k] - times[k - 1]);
    if (gaps.empty()) return 0.0;
    std::sort(gaps.begin(), gaps.end());
    const auto mid = gaps.size() / 2;
    return gaps.size() % 2 ? gaps[mid] : 0.5 * (gaps[mid - 1] + gaps[mid]);
}

std::string echo_config(const ExperimentConfig& config)
{
    // The output location does not affect results; leaving it out keeps
    // reports of identical runs byte-identical wherever they are written.
    auto j = nlohmann::ordered_json::parse(config_to_json(config));
    j.erase("output_dir");
    return j.dump();
}

// One fold: train on `train_ranges`, report on the test/validation ranges.
// Errors are recorded on the fold so the remaining folds still run.
void run_fold(FoldResult& fold, const ExperimentConfig& config, const neural::TrainConfig& train_cfg,
              std::span<const LabeledSlice> slices, std::span<const SliceRange> train_ranges,
              std::span<const SliceRange> test_ranges, std::span<const SliceRange> valid_ranges, std::uint64_t fold_index)
{
    const Index T = train_cfg.timesteps;
    try {
        const auto train_refs = windows_in(train_ranges, T);
        fold.train_windows = train_refs.size();
        fold.test_windows = windows_in(test_ranges, T).size();
        if (train_refs.empty()) fail(Errc::EmptyTrainSet, "fold " + fold.name + " has no training windows");

        neural::TrainConfig cfg = train_cfg;
        cfg.seed = mix_seed(train_cfg.seed, kInitStream + fold_index);
        log::info("fold ", fold.name, ": ", train_refs.size(), " training windows, ", cfg.training_steps, " steps");
        auto trained = train_model(slices, train_refs, cfg, mix_seed(config.seed, kBatchStream + fold_index));
        fold.loss_trace = trained.loss_trace;

        const auto norm_slices = normalized(slices, trained.norm);
        auto report = [&](std::span<const SliceRange> ranges) {
            return summarize(evaluate_ranges(trained.model, norm_slices, ranges, T, config.postprocess),
                             config.metric1_mode);
        };
        fold.test = report(test_ranges);
        if (!valid_ranges.empty()) fold.validation = report(valid_ranges);
        log::info("fold ", fold.name, ": metric-3 test error ",
                  100.0 * fold.test->metric[2].combined(), "%, accuracy ", fold.test->signal_accuracy);
    } catch (const Error& e) {
        log::error("fold ", fold.name, " failed: ", e.what());
        fold.error = e.detail();
        fold.error_code = std::string(errc_name(e.code()));
        fold.test.reset();
        fold.validation.reset();
    }
}

void require_success(const ExperimentResult& result)
{
    const bool any = std::any_of(result.folds.begin(), result.folds.end(), [](const FoldResult& f) { return f.error.empty(); });
    if (!any && !result.folds.empty()) {
        // Re-raise with the first fold's error kind so callers can map it.
        const auto& f = result.folds.front();
        fail(errc_from_name(f.error_code).value_or(Errc::DivergedTraining), "every fold failed; first: " + f.error);
    }
}

}  // namespace

GroupData group_from_records(std::span<const ingest::WalkRecord> records, ingest::WalkerGroup group)
{
    GroupData data;
    std::vector<std::string> owners;
    for (const auto& rec : records) {
        if (rec.walk.walker_group != group) continue;
        ++data.walks;
        for (const auto& slice : ingest::extract_usable_spans(rec.walk, rec.sensors)) {
            data.slices.push_back(dataset::label_slice(slice));
            owners.push_back(rec.walk.participant_id);
        }
    }
    data.participants = dataset::distinct_participants(owners);
    return data;
}

GroupData load_group(const ExperimentConfig& config)
{
    ingest::CsvOptions options;
    options.timestamp_column = config.timestamp_column;
    const auto records = ingest::load_dataset_dir(config.dataset_root, options, &config.group);
    auto data = group_from_records(records, config.group);
    if (data.slices.empty()) {
        fail(Errc::NoUsableData, "no usable " + std::string(ingest::to_string(config.group)) + " walks under " +
                                     config.dataset_root.string());
    }
    log::info("loaded ", data.walks, " ", ingest::to_string(config.group), " walks, ", data.slices.size(),
              " slices, ", data.participants.size(), " participants");
    return data;
}

std::vector<SliceRange> make_chunks(std::span<const LabeledSlice> slices, Index timesteps, double chunk_seconds)
{
    std::vector<SliceRange> chunks;
    for (std::size_t s = 0; s < slices.size(); ++s) {
        const Index len = slices[s].length();
        if (len < timesteps) continue;
        const double gap = median_gap(slices[s].times);
        const auto target = gap > 0.0 ? static_cast<Index>(std::llround(chunk_seconds / gap)) : len;
        const Index size = std::max(timesteps, target);
        const std::size_t first_of_slice = chunks.size();
        for (Index a = 0; a < len; a += size) chunks.push_back({s, a, std::min(len, a + size) - 1});
        auto& tail = chunks.back();
        if (chunks.size() - first_of_slice > 1 && tail.last - tail.first + 1 < size / 2) {
            chunks[chunks.size() - 2].last = tail.last;
            chunks.pop_back();
        }
    }
    return chunks;
}

std::vector<WindowRef> windows_in(std::span<const SliceRange> ranges, Index timesteps)
{
    std::vector<WindowRef> refs;
    for (const auto& r : ranges) {
        for (Index e = std::max(r.first, timesteps - 1); e <= r.last; ++e) {
            refs.push_back({static_cast<std::uint32_t>(r.slice), static_cast<std::uint32_t>(e)});
        }
    }
    return refs;
}

std::vector<SliceRange> whole_slices(std::span<const LabeledSlice> slices,
                                     const std::function<bool(const LabeledSlice&)>& keep, Index timesteps)
{
    std::vector<SliceRange> out;
    for (std::size_t s = 0; s < slices.size(); ++s) {
        if (!keep(slices[s])) continue;
        if (slices[s].length() < timesteps) {
            log::info("slice ", slices[s].id, " is shorter than one window and is not evaluated");
            continue;
        }
        out.push_back({s, 0, slices[s].length() - 1});
    }
    return out;
}

std::vector<LabeledSlice> normalized(std::span<const LabeledSlice> slices, const dataset::NormStats& norm)
{
    std::vector<LabeledSlice> out(slices.begin(), slices.end());
    for (auto& s : out) dataset::apply_norm(s.inputs, norm);
    return out;
}

TrainedModel train_model(std::span<const LabeledSlice> slices, std::span<const WindowRef> train,
                         const neural::TrainConfig& config, std::uint64_t batch_seed,
                         const std::function<void(std::uint64_t, double)>& on_step)
{
    config.validate();
    TrainedModel out;
    // Statistics come from the training windows before any evaluation data is
    // normalized.
    out.norm = dataset::fit_norm_stats(slices, train, config.timesteps);
    const auto norm_slices = normalized(slices, out.norm);

    const dataset::BatchSampler sampler(train.size(), static_cast<std::size_t>(config.batch_size), batch_seed);
    const neural::BatchProvider provider = [&](std::uint64_t step) {
        const auto pick = sampler.batch_for_step(step);
        return dataset::gather_batch(norm_slices, train, pick, config.timesteps);
    };
    out.model = neural::LstmModel::initialized(config.shape(dataset::kChannels), config.dropout_rate, config.seed);
    out.loss_trace = neural::train(out.model, provider, config, {}, on_step).loss_trace;
    return out;
}

std::vector<RangeEval> evaluate_ranges(const neural::LstmModel& model, std::span<const LabeledSlice> norm_slices,
                                       std::span<const SliceRange> ranges, Index timesteps,
                                       const postprocess::PostprocessConfig& post)
{
    std::vector<RangeEval> out;
    out.reserve(ranges.size());
    for (const auto& r : ranges) {
        const auto& slice = norm_slices[r.slice];
        const Index context = std::max<Index>(r.first - 1, 0);
        std::vector<Index> positions(static_cast<std::size_t>(r.last - context + 1));
        std::iota(positions.begin(), positions.end(), context);
        const auto raw = neural::predict_positions(model, slice.inputs, timesteps, positions);
        const auto bits = postprocess::binarize(raw, post);

        RangeEval ev;
        ev.segment.segment = slice.id + "@" + std::to_string(r.first) + "-" + std::to_string(r.last);
        ev.segment.span_start = slice.times[static_cast<std::size_t>(context)];
        ev.segment.span_end = slice.times[static_cast<std::size_t>(r.last)];
        for (std::size_t k = 1; k < bits.size(); ++k) {
            if (bits[k] != bits[k - 1]) ev.segment.predicted.push_back(slice.times[static_cast<std::size_t>(context) + k]);
        }
        for (const auto& step : slice.steps) {
            if (step.t > ev.segment.span_start && step.t <= ev.segment.span_end) ev.segment.ground_truth.push_back(step.t);
        }
        const std::size_t skip = static_cast<std::size_t>(r.first - context);
        const std::span<const std::uint8_t> predicted_bits(bits.data() + skip, bits.size() - skip);
        const std::span<const std::uint8_t> truth(slice.labels.data() + r.first, predicted_bits.size());
        ev.accuracy = {postprocess::signal_accuracy(predicted_bits, truth), static_cast<std::int64_t>(truth.size())};
        out.push_back(std::move(ev));
    }
    return out;
}

metrics::StepErrorReport summarize(std::span<const RangeEval> evals, metrics::Metric1Mode mode)
{
    std::vector<metrics::SegmentEval> segments;
    std::vector<metrics::AccuracySample> accuracies;
    for (const auto& e : evals) {
        segments.push_back(e.segment);
        accuracies.push_back(e.accuracy);
    }
    return metrics::aggregate(segments, accuracies, mode);
}

ExperimentResult run_mixed(const ExperimentConfig& config, const GroupData& data)
{
    config.validate();
    const Index T = config.train.timesteps;
    const auto chunks = make_chunks(data.slices, T, config.chunk_seconds);
    const auto plans = dataset::split_mixed_kfold(chunks.size(), config.folds, config.seed);

    ExperimentResult result;
    result.protocol = "mixed";
    result.group = std::string(ingest::to_string(config.group));
    result.config_json = echo_config(config);
    for (std::size_t f = 0; f < plans.size(); ++f) {
        std::vector<SliceRange> train_ranges;
        std::vector<SliceRange> test_ranges;
        for (auto i : plans[f].train) train_ranges.push_back(chunks[i]);
        for (auto i : plans[f].test) test_ranges.push_back(chunks[i]);
        FoldResult fold;
        fold.name = plans[f].name;
        run_fold(fold, config, config.train, data.slices, train_ranges, test_ranges, {}, f);
        result.folds.push_back(std::move(fold));
    }
    require_success(result);
    return result;
}

ExperimentResult run_leave_one_out(const ExperimentConfig& config, const GroupData& data)
{
    config.validate();
    const auto& people = data.participants;
    if (people.size() < 2) {
        fail(Errc::SingleParticipant, "leave-one-out needs at least 2 participants, found " + std::to_string(people.size()));
    }
    if (config.validation && people.size() < 3) {
        fail(Errc::TooFewParticipants, "train/validation/test rotation needs at least 3 participants");
    }
    std::vector<std::string> tests;
    if (config.held_test == "all") {
        tests = people;
    } else {
        if (std::find(people.begin(), people.end(), config.held_test) == people.end()) {
            fail(Errc::UnknownParticipant, "participant '" + config.held_test + "' is not in the " +
                                               std::string(ingest::to_string(config.group)) + " group");
        }
        tests = {config.held_test};
    }

    std::vector<std::string> candidates{"{}"};
    candidates.insert(candidates.end(), config.grid.begin(), config.grid.end());
    if (!config.grid.empty()) candidates.erase(candidates.begin());

    const Index T = config.train.timesteps;
    auto of = [&](const std::string& p) {
        return whole_slices(data.slices, [&](const LabeledSlice& s) { return s.participant_id == p; }, T);
    };

    ExperimentResult best;
    double best_score = 0.0;
    std::vector<Candidate> scored;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto train_cfg = train_config_from_json(candidates[c], config.train);
        ExperimentResult result;
        result.protocol = "leave_one_out";
        result.group = std::string(ingest::to_string(config.group));
        result.config_json = echo_config(config);
        std::uint64_t fold_index = 0;
        for (const auto& test : tests) {
            std::vector<std::string> valids;
            if (config.validation) {
                for (const auto& p : people) {
                    if (p != test) valids.push_back(p);
                }
            } else {
                valids.push_back({});
            }
            for (const auto& valid : valids) {
                FoldResult fold;
                fold.name = "cv" + std::to_string(fold_index);
                fold.test_participant = test;
                fold.validation_participant = valid;
                std::vector<SliceRange> train_ranges;
                for (const auto& p : people) {
                    if (p == test || p == valid) continue;
                    const auto r = of(p);
                    train_ranges.insert(train_ranges.end(), r.begin(), r.end());
                }
                const auto test_ranges = of(test);
                const auto valid_ranges = valid.empty() ? std::vector<SliceRange>{} : of(valid);
                run_fold(fold, config, train_cfg, data.slices, train_ranges, test_ranges, valid_ranges, fold_index);
                result.folds.push_back(std::move(fold));
                ++fold_index;
            }
        }
        require_success(result);
        if (candidates.size() == 1) return result;

        const auto mean = mean_report(result.folds, true);
        const double score = mean ? mean->metric[2].combined() : INFINITY;
        scored.push_back({candidates[c], score});
        log::info("candidate ", candidates[c], ": mean validation metric-3 error ", 100.0 * score, "%");
        if (c == 0 || score < best_score) {
            best = std::move(result);
            best_score = score;
            best.selected = c;
        }
    }
    best.candidates = std::move(scored);
    return best;
}

ExperimentResult run_experiment(const ExperimentConfig& config)
{
    config.validate();
    const auto data = load_group(config);
    return config.protocol == Protocol::Mixed ? run_mixed(config, data) : run_leave_one_out(config, data);
}

std::optional<metrics::StepErrorReport> mean_report(std::span<const FoldResult> folds, bool validation)
{
    metrics::StepErrorReport mean;
    std::size_t n = 0;
    for (const auto& f : folds) {
        const auto& r = validation ? f.validation : f.test;
        if (!r) continue;
        ++n;
        for (std::size_t m = 0; m < 3; ++m) {
            mean.metric[m].under_events += r->metric[m].under_events;
            mean.metric[m].over_events += r->metric[m].over_events;
            mean.metric[m].under_rate += r->metric[m].under_rate;
            mean.metric[m].over_rate += r->metric[m].over_rate;
        }
        mean.total_steps += r->total_steps;
        mean.total_predicted += r->total_predicted;
        mean.signal_accuracy += r->signal_accuracy;
        mean.accuracy_samples += r->accuracy_samples;
        mean.segments += r->segments;
        mean.skipped_segments += r->skipped_segments;
        mean.metric1_pre_first_overcount += r->metric1_pre_first_overcount;
        mean.metric1_tail_undercount += r->metric1_tail_undercount;
    }
    if (n == 0) return std::nullopt;
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& m : mean.metric) {
        m.under_rate *= inv;
        m.over_rate *= inv;
    }
    mean.signal_accuracy *= inv;
    return mean;
}

neural::Checkpoint to_checkpoint(const TrainedModel& trained, const ExperimentConfig& config)
{
    neural::Checkpoint ck{trained.model, std::nullopt, {}, {}};
    ck.metadata["group"] = std::string(ingest::to_string(config.group));
    ck.metadata["train"] = train_config_to_json(config.train);
    ck.extras["norm.mean"] = std::vector<double>(trained.norm.mean.begin(), trained.norm.mean.end());
    ck.extras["norm.std"] = std::vector<double>(trained.norm.stddev.begin(), trained.norm.stddev.end());
    ck.extras["loss_trace"] = trained.loss_trace;
    return ck;
}

TrainedModel from_checkpoint(const neural::Checkpoint& checkpoint)
{
    TrainedModel out;
    out.model = checkpoint.model;
    auto take = [&](const std::string& key, std::array<double, dataset::kChannels>& dst) {
        const auto it = checkpoint.extras.find(key);
        if (it == checkpoint.extras.end() || it->second.size() != dst.size()) {
            fail(Errc::CorruptCheckpoint, "checkpoint lacks input normalization '" + key + "'");
        }
        std::copy(it->second.begin(), it->second.end(), dst.begin());
    };
    take("norm.mean", out.norm.mean);
    take("norm.std", out.norm.stddev);
    if (const auto it = checkpoint.extras.find("loss_trace"); it != checkpoint.extras.end()) out.loss_trace = it->second;
    return out;
}

}  // namespace stepcount::experiment
