#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stepcount/rng.hpp"

// Two-layer LSTM regressor trained with backpropagation through time and
// Adam. All parameters live in one flat vector; the layer matrices are
// column-major views into it, so optimizer state, gradients and checkpoints
// share a single layout.
namespace stepcount::neural {

using Index = Eigen::Index;
using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

struct LstmShape {
    Index input = 6;
    Index hidden1 = 64;
    Index hidden2 = 64;

    bool operator==(const LstmShape&) const = default;
};

enum class LossMode { LastOutput, FullSequence };

struct ParamBlock {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    std::size_t offset = 0;

    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

/// Parameter layout for a shape: layer{1,2}.{w_x,w_h,b}, readout.{w,b}.
/// Gate blocks inside w_x, w_h and b are stacked in the order i, f, g, o.
std::vector<ParamBlock> parameter_layout(const LstmShape& shape);

class LstmModel {
public:
    explicit LstmModel(LstmShape shape = {}, double dropout_rate = 0.0);

    /// Uniform(+-1/sqrt(fan_in)) weights, forget-gate bias 1, other biases 0.
    static LstmModel initialized(LstmShape shape, double dropout_rate, std::uint64_t seed);

    const LstmShape& shape() const { return shape_; }
    double dropout_rate() const { return dropout_rate_; }
    void set_dropout_rate(double rate);

    const std::vector<ParamBlock>& blocks() const { return blocks_; }
    const ParamBlock& block(const std::string& name) const;

    std::span<const double> parameters() const { return params_; }
    /// Any mutable access invalidates forward caches taken earlier.
    std::span<double> mutable_parameters();

    /// Changes whenever parameters may have changed.
    std::uint64_t version() const { return version_; }

    // layer is 1 or 2
    ConstMatrixMap input_weights(int layer) const;
    ConstMatrixMap recurrent_weights(int layer) const;
    ConstVectorMap bias(int layer) const;
    ConstVectorMap readout_weights() const;
    double readout_bias() const;

    Index hidden(int layer) const { return layer == 1 ? shape_.hidden1 : shape_.hidden2; }
    Index layer_input(int layer) const { return layer == 1 ? shape_.input : shape_.hidden1; }

private:
    void touch();

    LstmShape shape_;
    double dropout_rate_;
    std::vector<ParamBlock> blocks_;
    // Eigen peels vectorized reductions by runtime address, so the storage
    // alignment must not vary between copies for results to be bit-stable.
    ParamVector params_;
    std::uint64_t version_;
};

/// One minibatch in stacked layout: `inputs` is input x (timesteps * batch)
/// with step t occupying columns [t * batch, (t + 1) * batch); `targets` is
/// timesteps x batch.
struct SequenceBatch {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;

    Index timesteps() const { return targets.rows(); }
    Index batch() const { return targets.cols(); }
};

/// Per-layer activations, stacked like SequenceBatch::inputs.
struct LayerCache {
    Eigen::MatrixXd x;       // layer input
    Eigen::MatrixXd gates;   // activated i, f, g, o stacked (4H rows)
    Eigen::MatrixXd c;
    Eigen::MatrixXd tanh_c;
    Eigen::MatrixXd h;
};

struct ForwardCache {
    std::uint64_t model_version = 0;
    LstmShape shape;
    Index timesteps = 0;
    LayerCache layer1;
    LayerCache layer2;
    Eigen::MatrixXd dropout_mask;  // empty when dropout was off
    Eigen::MatrixXd outputs;       // timesteps x batch
};

struct ForwardResult {
    Eigen::MatrixXd outputs;  // timesteps x batch, values in (0, 1)
    ForwardCache cache;
};

/// Training mode applies inverted dropout between the layers using masks drawn
/// from `dropout_rng`; pass nullptr for inference.
ForwardResult lstm_forward(const LstmModel& model, const Eigen::MatrixXd& inputs, Index timesteps,
                           Rng* dropout_rng = nullptr);

/// Same, writing into an existing cache so its buffers are reused.
void lstm_forward(const LstmModel& model, const Eigen::MatrixXd& inputs, Index timesteps, Rng* dropout_rng,
                  ForwardCache& cache);

/// Single window (timesteps x input) in inference mode; returns per-step outputs.
Eigen::VectorXd lstm_forward(const LstmModel& model, const Eigen::MatrixXd& window);

/// Packs windows (each timesteps x input) into the stacked batch layout.
Eigen::MatrixXd stack_windows(std::span<const Eigen::MatrixXd> windows);

/// Per-window mean of squared differences (LastOutput: last step only),
/// averaged over the batch.
double batch_loss(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets, LossMode mode);

/// Exact gradient of batch_loss with respect to every parameter, in the
/// parameter layout of `model`.
ParamVector lstm_backward(const LstmModel& model, const ForwardCache& cache,
                          const Eigen::MatrixXd& targets, LossMode mode);

struct AdamConfig {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;

    static AdamState zeros(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg);
void adam_step(LstmModel& model, std::span<const double> grads, AdamState& state, const AdamConfig& cfg);

/// Rescales `grads` in place when its L2 norm exceeds max_norm; returns the
/// pre-clipping norm.
double clip_global_norm(std::span<double> grads, double max_norm);

struct TrainConfig {
    Index timesteps = 50;
    Index batch_size = 256;
    double learning_rate = 0.01;
    std::uint64_t training_steps = 200;
    Index hidden1 = 64;
    Index hidden2 = 64;
    double dropout_rate = 0.2;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    LossMode loss_mode = LossMode::LastOutput;
    double clip_norm = 5.0;

    void validate() const;
    AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
    LstmShape shape(Index input = 6) const { return {input, hidden1, hidden2}; }
};

/// Supplies the minibatch for a global step index. Must be a pure function of
/// the step so that interrupted runs resume onto the same trajectory.
using BatchProvider = std::function<SequenceBatch(std::uint64_t step)>;

struct TrainResult {
    std::vector<double> loss_trace;  // one entry per step run by this call
    AdamState optimizer;
};

/// Runs Adam updates from optimizer.step up to config.training_steps.
/// Non-finite losses or activations raise DivergedTraining naming the step.
TrainResult train(LstmModel& model, const BatchProvider& batches, const TrainConfig& config,
                  AdamState optimizer = {},
                  const std::function<void(std::uint64_t, double)>& on_step = {});

/// Last output of each window; windows are timesteps x input.
std::vector<double> predict_last(const LstmModel& model, std::span<const Eigen::MatrixXd> windows);

/// Per-sample prediction over a slice (length x input). Position e >= T-1 is
/// the last output of the window ending at e; earlier positions take the
/// intermediate outputs of the first window. Dropout is never applied.
std::vector<double> predict_slice(const LstmModel& model, const Eigen::MatrixXd& slice, Index timesteps);

/// Same rule restricted to selected positions (sorted or not, each < rows).
std::vector<double> predict_positions(const LstmModel& model, const Eigen::MatrixXd& slice, Index timesteps,
                                      std::span<const Index> positions);

struct Checkpoint {
    LstmModel model;
    std::optional<AdamState> optimizer;
    /// Free-form hyperparameters recorded in the manifest.
    std::map<std::string, std::string> metadata;
    /// Additional named float arrays stored bit-exactly (e.g. input scaling).
    std::map<std::string, std::vector<double>> extras;
};

/// File layout: "SCK1", u64 little-endian manifest length, JSON manifest,
/// then little-endian float64 arrays in manifest order.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string to_string(LossMode mode);
LossMode loss_mode_from_string(const std::string& text);

}  // namespace stepcount::neural
