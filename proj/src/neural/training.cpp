#include <algorithm>
#include <cmath>
#include <numeric>

#include "stepcount/error.hpp"
#include "stepcount/neural.hpp"

namespace stepcount::neural {

namespace {

constexpr std::uint64_t kDropoutStream = 0xD0;
constexpr Index kInferenceBatch = 256;

// Inference over windows given by their last-row index into `slice`.
// Returns timesteps x count outputs.
Eigen::MatrixXd forward_windows(const LstmModel& model, const Eigen::MatrixXd& slice, Index timesteps,
                                std::span<const Index> ends)
{
    const auto count = static_cast<Index>(ends.size());
    Eigen::MatrixXd stacked(slice.cols(), timesteps * count);
    for (Index j = 0; j < count; ++j) {
        const Index first = ends[static_cast<std::size_t>(j)] - timesteps + 1;
        for (Index t = 0; t < timesteps; ++t) stacked.col(t * count + j) = slice.row(first + t).transpose();
    }
    return lstm_forward(model, stacked, timesteps, nullptr).outputs;
}

}  // namespace

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg)
{
    if (grads.size() != params.size()) fail(Errc::ShapeMismatch, "gradient size differs from parameter size");
    if (state.first_moment.empty() && state.second_moment.empty() && state.step == 0) {
        state = AdamState::zeros(params.size());
    }
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        fail(Errc::ShapeMismatch, "optimizer state does not mirror the parameters");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = grads[k];
        double& m = state.first_moment[k];
        double& v = state.second_moment[k];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

void adam_step(LstmModel& model, std::span<const double> grads, AdamState& state, const AdamConfig& cfg)
{
    adam_step(model.mutable_parameters(), grads, state, cfg);
}

double clip_global_norm(std::span<double> grads, double max_norm)
{
    const double norm = std::sqrt(std::transform_reduce(grads.begin(), grads.end(), 0.0, std::plus<>{},
                                                        [](double g) { return g * g; }));
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (double& g : grads) g *= scale;
    }
    return norm;
}

void TrainConfig::validate() const
{
    if (timesteps < 1) fail(Errc::InvalidConfig, "timesteps must be >= 1");
    if (batch_size < 1) fail(Errc::InvalidConfig, "batch_size must be >= 1");
    if (!(learning_rate > 0.0)) fail(Errc::InvalidConfig, "learning_rate must be > 0");
    if (training_steps < 1) fail(Errc::InvalidConfig, "training_steps must be >= 1");
    if (hidden1 < 1 || hidden2 < 1) fail(Errc::InvalidConfig, "hidden sizes must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail(Errc::InvalidConfig, "dropout_rate must lie in [0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        fail(Errc::InvalidConfig, "adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) fail(Errc::InvalidConfig, "epsilon must be > 0");
    if (clip_norm < 0.0) fail(Errc::InvalidConfig, "clip_norm must be >= 0 (0 disables clipping)");
}

TrainResult train(LstmModel& model, const BatchProvider& batches, const TrainConfig& config, AdamState optimizer,
                  const std::function<void(std::uint64_t, double)>& on_step)
{
    config.validate();
    const auto n = model.parameters().size();
    if (optimizer.first_moment.empty() && optimizer.step == 0) optimizer = AdamState::zeros(n);
    if (optimizer.first_moment.size() != n || optimizer.second_moment.size() != n) {
        fail(Errc::ShapeMismatch, "optimizer state does not mirror the model");
    }

    TrainResult result;
    const auto adam = config.adam();
    ForwardCache cache;
    for (std::uint64_t step = optimizer.step; step < config.training_steps; ++step) {
        const SequenceBatch batch = batches(step);
        Rng dropout_rng(mix_seed(config.seed, kDropoutStream + (step << 8)));
        double loss = 0.0;
        ParamVector grads;
        try {
            lstm_forward(model, batch.inputs, batch.timesteps(), &dropout_rng, cache);
            loss = batch_loss(cache.outputs, batch.targets, config.loss_mode);
            if (!std::isfinite(loss)) fail(Errc::NonFiniteActivation, "loss is not finite");
            grads = lstm_backward(model, cache, batch.targets, config.loss_mode);
        } catch (const Error& e) {
            if (e.code() != Errc::NonFiniteActivation) throw;
            fail(Errc::DivergedTraining, "training diverged at step " + std::to_string(step) + " (" + e.what() + ")");
        }
        const double norm = clip_global_norm(grads, config.clip_norm);
        if (!std::isfinite(norm)) {
            fail(Errc::DivergedTraining, "non-finite gradient at step " + std::to_string(step));
        }
        adam_step(model, grads, optimizer, adam);
        result.loss_trace.push_back(loss);
        if (on_step) on_step(step, loss);
    }
    result.optimizer = std::move(optimizer);
    return result;
}

std::vector<double> predict_last(const LstmModel& model, std::span<const Eigen::MatrixXd> windows)
{
    std::vector<double> out;
    out.reserve(windows.size());
    for (std::size_t start = 0; start < windows.size(); start += kInferenceBatch) {
        const auto chunk = windows.subspan(start, std::min<std::size_t>(kInferenceBatch, windows.size() - start));
        const auto outputs = lstm_forward(model, stack_windows(chunk), chunk.front().rows(), nullptr).outputs;
        for (Index j = 0; j < outputs.cols(); ++j) out.push_back(outputs(outputs.rows() - 1, j));
    }
    return out;
}

std::vector<double> predict_positions(const LstmModel& model, const Eigen::MatrixXd& slice, Index timesteps,
                                      std::span<const Index> positions)
{
    if (timesteps < 1) fail(Errc::ShapeMismatch, "timesteps must be >= 1");
    if (slice.rows() < timesteps) {
        fail(Errc::SliceTooShort, "slice of " + std::to_string(slice.rows()) + " samples is shorter than " +
                                      std::to_string(timesteps) + " timesteps");
    }
    if (slice.cols() != model.shape().input) fail(Errc::ShapeMismatch, "slice channel count differs from model input");

    std::vector<double> out(positions.size(), 0.0);
    std::vector<Index> ends;
    std::vector<std::size_t> slots;
    bool need_prefix = false;
    for (std::size_t k = 0; k < positions.size(); ++k) {
        const Index p = positions[k];
        if (p < 0 || p >= slice.rows()) fail(Errc::ShapeMismatch, "position outside slice");
        if (p >= timesteps - 1) {
            ends.push_back(p);
            slots.push_back(k);
        } else {
            need_prefix = true;
        }
    }

    if (need_prefix) {
        const Index first_end = timesteps - 1;
        const auto first = forward_windows(model, slice, timesteps, std::span(&first_end, 1));
        for (std::size_t k = 0; k < positions.size(); ++k) {
            if (positions[k] < timesteps - 1) out[k] = first(positions[k], 0);
        }
    }
    for (std::size_t start = 0; start < ends.size(); start += kInferenceBatch) {
        const std::size_t stop = std::min(ends.size(), start + static_cast<std::size_t>(kInferenceBatch));
        const auto outputs =
            forward_windows(model, slice, timesteps, std::span(ends).subspan(start, stop - start));
        for (std::size_t j = start; j < stop; ++j) out[slots[j]] = outputs(timesteps - 1, static_cast<Index>(j - start));
    }
    return out;
}

std::vector<double> predict_slice(const LstmModel& model, const Eigen::MatrixXd& slice, Index timesteps)
{
    std::vector<Index> positions(static_cast<std::size_t>(slice.rows()));
    std::iota(positions.begin(), positions.end(), Index{0});
    return predict_positions(model, slice, timesteps, positions);
}

}  // namespace stepcount::neural
