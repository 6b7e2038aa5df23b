#include "stepcount/neural.hpp"

#include <atomic>
#include <cmath>

#include "stepcount/error.hpp"

namespace stepcount::neural {

namespace {

std::uint64_t next_version()
{
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

// Eigen 3.4 evaluates tanh on doubles with a scalar kernel; exp is
// vectorized and an order of magnitude faster.
template <typename Derived>
auto fast_tanh(const Eigen::ArrayBase<Derived>& x)
{
    return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

struct LayerView {
    ConstMatrixMap wx;
    ConstMatrixMap wh;
    ConstVectorMap b;
    Index hidden;
};

LayerView layer_view(const LstmModel& model, int layer)
{
    return {model.input_weights(layer), model.recurrent_weights(layer), model.bias(layer), model.hidden(layer)};
}

// Forward recurrence of one layer from zero state over the stacked input
// already stored in cache.x (layer input x timesteps*batch). The input projection for every step is a
// single GEMM; only the recurrent term is evaluated step by step.
void run_layer(const LayerView& layer, Index timesteps, LayerCache& cache)
{
    const auto& x = cache.x;
    const Index H = layer.hidden;
    const Index B = x.cols() / timesteps;

    cache.gates.noalias() = layer.wx * x;
    cache.gates.colwise() += layer.b;
    cache.c.resize(H, x.cols());
    cache.tanh_c.resize(H, x.cols());
    cache.h.resize(H, x.cols());

    for (Index t = 0; t < timesteps; ++t) {
        auto z = cache.gates.middleCols(t * B, B);
        if (t > 0) z.noalias() += layer.wh * cache.h.middleCols((t - 1) * B, B);

        z.topRows(2 * H) = z.topRows(2 * H).array().logistic();
        z.middleRows(2 * H, H) = fast_tanh(z.middleRows(2 * H, H).array());
        z.bottomRows(H) = z.bottomRows(H).array().logistic();

        auto c = cache.c.middleCols(t * B, B);
        if (t > 0) {
            c.array() = z.middleRows(H, H).array() * cache.c.middleCols((t - 1) * B, B).array() +
                        z.topRows(H).array() * z.middleRows(2 * H, H).array();
        } else {
            c.array() = z.topRows(H).array() * z.middleRows(2 * H, H).array();
        }
        auto tc = cache.tanh_c.middleCols(t * B, B);
        tc.array() = fast_tanh(c.array());
        cache.h.middleCols(t * B, B).array() = z.bottomRows(H).array() * tc.array();
    }
    if (!cache.c.allFinite()) fail(Errc::NonFiniteActivation, "cell state overflow");
}

// BPTT through one layer. dh_above holds the loss gradient reaching each h_t
// from above (stacked). Parameter gradients accumulate into the given maps;
// the input gradient is produced only when dx is non-null.
void backprop_layer(const LayerView& layer, const LayerCache& cache, Index timesteps, const Eigen::MatrixXd& dh_above,
                    MatrixMap dwx, MatrixMap dwh, VectorMap db, Eigen::MatrixXd* dx)
{
    const Index H = layer.hidden;
    const Index B = cache.h.cols() / timesteps;

    // Scratch kept alive between calls; reallocating it every step costs
    // page faults comparable to the arithmetic.
    thread_local Eigen::MatrixXd dz_all;
    dz_all.resize(4 * H, cache.h.cols());
    Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(H, B);
    Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(H, B);
    Eigen::MatrixXd dh(H, B);
    Eigen::MatrixXd dc(H, B);

    for (Index t = timesteps - 1; t >= 0; --t) {
        const auto gates = cache.gates.middleCols(t * B, B);
        const auto i = gates.topRows(H).array();
        const auto f = gates.middleRows(H, H).array();
        const auto g = gates.middleRows(2 * H, H).array();
        const auto o = gates.bottomRows(H).array();
        const auto tc = cache.tanh_c.middleCols(t * B, B).array();
        auto dz = dz_all.middleCols(t * B, B);

        dh = dh_above.middleCols(t * B, B) + dh_next;
        dc.array() = dc_next.array() + dh.array() * o * (1.0 - tc.square());

        dz.topRows(H).array() = dc.array() * g * i * (1.0 - i);
        if (t > 0) {
            dz.middleRows(H, H).array() = dc.array() * cache.c.middleCols((t - 1) * B, B).array() * f * (1.0 - f);
        } else {
            dz.middleRows(H, H).setZero();
        }
        dz.middleRows(2 * H, H).array() = dc.array() * i * (1.0 - g.square());
        dz.bottomRows(H).array() = dh.array() * tc * o * (1.0 - o);

        if (t > 0) {
            dh_next.noalias() = layer.wh.transpose() * dz;
            dc_next.array() = dc.array() * f;
        }
    }

    dwx.noalias() += dz_all * cache.x.transpose();
    if (timesteps > 1) {
        const Index tail = (timesteps - 1) * B;
        dwh.noalias() += dz_all.rightCols(tail) * cache.h.leftCols(tail).transpose();
    }
    db.noalias() += dz_all.rowwise().sum();
    if (dx) dx->noalias() = layer.wx.transpose() * dz_all;
}

}  // namespace

std::vector<ParamBlock> parameter_layout(const LstmShape& shape)
{
    std::vector<ParamBlock> blocks;
    std::size_t offset = 0;
    auto add = [&](std::string name, Index rows, Index cols) {
        blocks.push_back({std::move(name), rows, cols, offset});
        offset += static_cast<std::size_t>(rows * cols);
    };
    add("layer1.w_x", 4 * shape.hidden1, shape.input);
    add("layer1.w_h", 4 * shape.hidden1, shape.hidden1);
    add("layer1.b", 4 * shape.hidden1, 1);
    add("layer2.w_x", 4 * shape.hidden2, shape.hidden1);
    add("layer2.w_h", 4 * shape.hidden2, shape.hidden2);
    add("layer2.b", 4 * shape.hidden2, 1);
    add("readout.w", shape.hidden2, 1);
    add("readout.b", 1, 1);
    return blocks;
}

LstmModel::LstmModel(LstmShape shape, double dropout_rate)
    : shape_(shape), dropout_rate_(0.0), blocks_(parameter_layout(shape)), version_(next_version())
{
    if (shape.input < 1 || shape.hidden1 < 1 || shape.hidden2 < 1) {
        fail(Errc::ShapeMismatch, "LSTM dimensions must be positive");
    }
    set_dropout_rate(dropout_rate);
    params_.assign(blocks_.back().offset + blocks_.back().size(), 0.0);
}

LstmModel LstmModel::initialized(LstmShape shape, double dropout_rate, std::uint64_t seed)
{
    LstmModel model(shape, dropout_rate);
    Rng rng(seed);
    auto params = model.mutable_parameters();
    auto fill_uniform = [&](const ParamBlock& blk, double fan_in) {
        const double limit = 1.0 / std::sqrt(fan_in);
        for (std::size_t k = 0; k < blk.size(); ++k) params[blk.offset + k] = rng.uniform(-limit, limit);
    };
    for (int layer = 1; layer <= 2; ++layer) {
        const std::string prefix = "layer" + std::to_string(layer);
        fill_uniform(model.block(prefix + ".w_x"), static_cast<double>(model.layer_input(layer)));
        fill_uniform(model.block(prefix + ".w_h"), static_cast<double>(model.hidden(layer)));
        const auto& bias = model.block(prefix + ".b");
        const Index H = model.hidden(layer);
        for (Index k = H; k < 2 * H; ++k) params[bias.offset + static_cast<std::size_t>(k)] = 1.0;
    }
    fill_uniform(model.block("readout.w"), static_cast<double>(shape.hidden2));
    return model;
}

void LstmModel::set_dropout_rate(double rate)
{
    if (!(rate >= 0.0 && rate < 1.0)) fail(Errc::ShapeMismatch, "dropout rate must lie in [0, 1)");
    dropout_rate_ = rate;
}

const ParamBlock& LstmModel::block(const std::string& name) const
{
    for (const auto& blk : blocks_) {
        if (blk.name == name) return blk;
    }
    fail(Errc::ShapeMismatch, "no parameter block named " + name);
}

std::span<double> LstmModel::mutable_parameters()
{
    touch();
    return params_;
}

void LstmModel::touch() { version_ = next_version(); }

ConstMatrixMap LstmModel::input_weights(int layer) const
{
    const auto& blk = blocks_[layer == 1 ? 0 : 3];
    return {params_.data() + blk.offset, blk.rows, blk.cols};
}

ConstMatrixMap LstmModel::recurrent_weights(int layer) const
{
    const auto& blk = blocks_[layer == 1 ? 1 : 4];
    return {params_.data() + blk.offset, blk.rows, blk.cols};
}

ConstVectorMap LstmModel::bias(int layer) const
{
    const auto& blk = blocks_[layer == 1 ? 2 : 5];
    return {params_.data() + blk.offset, blk.rows};
}

ConstVectorMap LstmModel::readout_weights() const
{
    const auto& blk = blocks_[6];
    return {params_.data() + blk.offset, blk.rows};
}

double LstmModel::readout_bias() const { return params_[blocks_[7].offset]; }

void lstm_forward(const LstmModel& model, const Eigen::MatrixXd& inputs, Index timesteps, Rng* dropout_rng,
                  ForwardCache& cache)
{
    if (timesteps < 1 || inputs.cols() == 0 || inputs.cols() % timesteps != 0) {
        fail(Errc::ShapeMismatch, "stacked input has " + std::to_string(inputs.cols()) +
                                      " columns, not a positive multiple of " + std::to_string(timesteps) +
                                      " timesteps");
    }
    if (inputs.rows() != model.shape().input) {
        fail(Errc::ShapeMismatch, "input has " + std::to_string(inputs.rows()) + " channels, model expects " +
                                      std::to_string(model.shape().input));
    }
    if (!inputs.allFinite()) fail(Errc::ShapeMismatch, "non-finite input value");
    const Index B = inputs.cols() / timesteps;

    cache.model_version = model.version();
    cache.shape = model.shape();
    cache.timesteps = timesteps;

    cache.layer1.x = inputs;
    run_layer(layer_view(model, 1), timesteps, cache.layer1);

    const double rate = model.dropout_rate();
    if (dropout_rng && rate > 0.0) {
        const double keep_scale = 1.0 / (1.0 - rate);
        cache.dropout_mask.resize(cache.layer1.h.rows(), cache.layer1.h.cols());
        for (Index j = 0; j < cache.dropout_mask.cols(); ++j) {
            for (Index r = 0; r < cache.dropout_mask.rows(); ++r) {
                cache.dropout_mask(r, j) = dropout_rng->uniform() < rate ? 0.0 : keep_scale;
            }
        }
        cache.layer2.x.array() = cache.layer1.h.array() * cache.dropout_mask.array();
    } else {
        cache.dropout_mask.resize(0, 0);
        cache.layer2.x = cache.layer1.h;
    }
    run_layer(layer_view(model, 2), timesteps, cache.layer2);

    const Eigen::RowVectorXd stacked =
        ((model.readout_weights().transpose() * cache.layer2.h).array() + model.readout_bias()).logistic();
    cache.outputs = Eigen::Map<const Eigen::MatrixXd>(stacked.data(), B, timesteps).transpose();
    if (!cache.outputs.allFinite()) fail(Errc::NonFiniteActivation, "readout produced non-finite values");
}

ForwardResult lstm_forward(const LstmModel& model, const Eigen::MatrixXd& inputs, Index timesteps, Rng* dropout_rng)
{
    ForwardResult result;
    lstm_forward(model, inputs, timesteps, dropout_rng, result.cache);
    result.outputs = result.cache.outputs;
    return result;
}

Eigen::VectorXd lstm_forward(const LstmModel& model, const Eigen::MatrixXd& window)
{
    return lstm_forward(model, window.transpose(), window.rows(), nullptr).outputs.col(0);
}

Eigen::MatrixXd stack_windows(std::span<const Eigen::MatrixXd> windows)
{
    if (windows.empty()) fail(Errc::ShapeMismatch, "no windows to stack");
    const Index T = windows.front().rows();
    const Index D = windows.front().cols();
    const auto B = static_cast<Index>(windows.size());
    Eigen::MatrixXd stacked(D, T * B);
    for (Index j = 0; j < B; ++j) {
        const auto& w = windows[static_cast<std::size_t>(j)];
        if (w.rows() != T || w.cols() != D) fail(Errc::ShapeMismatch, "windows must share one shape");
        for (Index t = 0; t < T; ++t) stacked.col(t * B + j) = w.row(t).transpose();
    }
    return stacked;
}

double batch_loss(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets, LossMode mode)
{
    if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols() || outputs.size() == 0) {
        fail(Errc::ShapeMismatch, "outputs and targets differ in shape");
    }
    if (mode == LossMode::LastOutput) {
        return (outputs.row(outputs.rows() - 1) - targets.row(targets.rows() - 1)).squaredNorm() /
               static_cast<double>(outputs.cols());
    }
    return (outputs - targets).squaredNorm() / static_cast<double>(outputs.size());
}

ParamVector lstm_backward(const LstmModel& model, const ForwardCache& cache, const Eigen::MatrixXd& targets,
                          LossMode mode)
{
    if (cache.model_version != model.version() || !(cache.shape == model.shape()) || cache.timesteps < 1) {
        fail(Errc::StaleCache, "forward cache does not belong to the current model parameters");
    }
    const auto& y = cache.outputs;
    if (targets.rows() != y.rows() || targets.cols() != y.cols()) {
        fail(Errc::ShapeMismatch, "targets do not match forward outputs");
    }
    const Index T = y.rows();
    const Index B = y.cols();

    ParamVector grads(model.parameters().size(), 0.0);
    const auto& blocks = model.blocks();
    auto grad_matrix = [&](std::size_t k) { return MatrixMap(grads.data() + blocks[k].offset, blocks[k].rows, blocks[k].cols); };
    auto grad_vector = [&](std::size_t k) { return VectorMap(grads.data() + blocks[k].offset, blocks[k].rows); };

    Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(T, B);
    if (mode == LossMode::LastOutput) {
        dy.row(T - 1) = 2.0 * (y.row(T - 1) - targets.row(T - 1)) / static_cast<double>(B);
    } else {
        dy = 2.0 * (y - targets) / static_cast<double>(T * B);
    }
    // Back to the stacked column order t * B + j.
    const Eigen::MatrixXd dz_tb = (dy.array() * y.array() * (1.0 - y.array())).matrix().transpose();
    const Eigen::Map<const Eigen::RowVectorXd> dz_out(dz_tb.data(), T * B);

    grad_vector(6).noalias() += cache.layer2.h * dz_out.transpose();
    grads[blocks[7].offset] = dz_out.sum();
    const Eigen::MatrixXd dh2 = model.readout_weights() * dz_out;

    Eigen::MatrixXd dx2;
    backprop_layer(layer_view(model, 2), cache.layer2, T, dh2, grad_matrix(3), grad_matrix(4), grad_vector(5), &dx2);
    if (cache.dropout_mask.size() > 0) dx2.array() *= cache.dropout_mask.array();
    backprop_layer(layer_view(model, 1), cache.layer1, T, dx2, grad_matrix(0), grad_matrix(1), grad_vector(2), nullptr);
    return grads;
}

std::string to_string(LossMode mode) { return mode == LossMode::LastOutput ? "last_output" : "full_sequence"; }

LossMode loss_mode_from_string(const std::string& text)
{
    if (text == "last_output") return LossMode::LastOutput;
    if (text == "full_sequence") return LossMode::FullSequence;
    fail(Errc::InvalidConfig, "unknown loss mode '" + text + "' (expected last_output or full_sequence)");
}

}  // namespace stepcount::neural
