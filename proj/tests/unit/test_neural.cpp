#include <doctest.h>

#include <cstring>
#include <fstream>

#include "stepcount/error.hpp"
#include "stepcount/neural.hpp"
#include "test_support.hpp"

using namespace stepcount;
using namespace stepcount::neural;

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

bool bit_equal(std::span<const double> a, std::span<const double> b)
{
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("parameter layout covers the flat vector")
{
    const LstmShape shape{6, 5, 4};
    const auto blocks = parameter_layout(shape);
    std::size_t total = 0;
    for (const auto& b : blocks) {
        CHECK(b.offset == total);
        total += b.size();
    }
    LstmModel m(shape);
    CHECK(m.parameters().size() == total);
    CHECK(m.block("layer2.w_x").rows == 16);
    CHECK(m.block("layer2.w_x").cols == 5);
    CHECK(code_of([&] { m.block("nope"); }) == Errc::ShapeMismatch);
}

TEST_CASE("zero network outputs one half")
{
    LstmModel m(LstmShape{6, 4, 3});
    const auto r = lstm_forward(m, Eigen::MatrixXd::Zero(6, 5 * 2), 5);
    CHECK(r.outputs.rows() == 5);
    CHECK(r.outputs.cols() == 2);
    CHECK((r.outputs.array() == 0.5).all());
}

TEST_CASE("initialization rule")
{
    const auto m = LstmModel::initialized(LstmShape{6, 8, 4}, 0.0, 3);
    const auto b1 = m.bias(1);
    CHECK(b1.segment(8, 8).isOnes());
    CHECK(b1.segment(0, 8).isZero());
    CHECK(m.input_weights(1).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(6.0));
    CHECK(m.recurrent_weights(2).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(4.0));
    CHECK(bit_equal(m.parameters(), LstmModel::initialized(LstmShape{6, 8, 4}, 0.0, 3).parameters()));
}

TEST_CASE("loss examples")
{
    Eigen::MatrixXd out(1, 1), tgt(1, 1);
    out << 0.5;
    tgt << 1.0;
    CHECK(batch_loss(out, tgt, LossMode::LastOutput) == 0.25);
    CHECK(batch_loss(out, out, LossMode::LastOutput) == 0.0);
    Eigen::MatrixXd seq(2, 1), seq_t(2, 1);
    seq << 0.5, 1.0;
    seq_t << 0.0, 1.0;
    CHECK(batch_loss(seq, seq_t, LossMode::FullSequence) == 0.125);
    CHECK(code_of([&] { batch_loss(seq, tgt, LossMode::FullSequence); }) == Errc::ShapeMismatch);
}

TEST_CASE("forward is deterministic and bounded")
{
    Rng rng(1);
    const auto m = LstmModel::initialized(LstmShape{6, 7, 5}, 0.0, 2);
    auto b = testsupport::random_batch(rng, 6, 9, 3);
    b.inputs *= 20.0;
    const auto a = lstm_forward(m, b.inputs, 9);
    const auto c = lstm_forward(m, b.inputs, 9);
    CHECK(bit_equal({a.outputs.data(), static_cast<std::size_t>(a.outputs.size())},
                    {c.outputs.data(), static_cast<std::size_t>(c.outputs.size())}));
    CHECK((a.outputs.array() > 0.0).all());
    CHECK((a.outputs.array() < 1.0).all());
    CHECK(a.cache.layer1.h.cwiseAbs().maxCoeff() <= 1.0);
    CHECK(a.cache.layer2.h.cwiseAbs().maxCoeff() <= 1.0);
    CHECK(a.cache.layer2.c.allFinite());
    CHECK(code_of([&] { lstm_forward(m, Eigen::MatrixXd::Zero(5, 9), 9); }) == Errc::ShapeMismatch);
}

TEST_CASE("gradients match central differences")
{
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        const auto m = LstmModel::initialized(LstmShape{6, 3, 3}, 0.0, rng.next_u64());
        const auto b = testsupport::random_batch(rng, 6, 4, 2);
        CHECK(testsupport::max_gradient_error(m, b, LossMode::LastOutput) < 1e-5);
        CHECK(testsupport::max_gradient_error(m, b, LossMode::FullSequence) < 1e-5);
    }
}

TEST_CASE("zero loss gives zero gradient")
{
    Rng rng(8);
    const auto m = LstmModel::initialized(LstmShape{6, 3, 3}, 0.0, 5);
    auto b = testsupport::random_batch(rng, 6, 4, 2);
    const auto fwd = lstm_forward(m, b.inputs, 4);
    b.targets = fwd.outputs;
    const auto g = lstm_backward(m, fwd.cache, b.targets, LossMode::LastOutput);
    for (double x : g) CHECK(x == 0.0);
}

TEST_CASE("forget-gate input weights receive gradient")
{
    Rng rng(9);
    const auto m = LstmModel::initialized(LstmShape{6, 3, 3}, 0.0, 6);
    const auto b = testsupport::random_batch(rng, 6, 4, 2);
    const auto fwd = lstm_forward(m, b.inputs, 4);
    CHECK(fwd.cache.layer1.c.cwiseAbs().maxCoeff() > 0.0);
    const auto g = lstm_backward(m, fwd.cache, b.targets, LossMode::LastOutput);
    const auto& blk = m.block("layer1.w_x");
    const ConstMatrixMap gw(g.data() + blk.offset, blk.rows, blk.cols);
    CHECK(gw.middleRows(3, 3).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("stale cache is rejected")
{
    Rng rng(10);
    auto m = LstmModel::initialized(LstmShape{6, 3, 3}, 0.0, 7);
    const auto b = testsupport::random_batch(rng, 6, 4, 2);
    const auto fwd = lstm_forward(m, b.inputs, 4);
    m.mutable_parameters()[0] += 1.0;
    CHECK(code_of([&] { lstm_backward(m, fwd.cache, b.targets, LossMode::LastOutput); }) == Errc::StaleCache);
}

TEST_CASE("adam")
{
    SUBCASE("zero gradient leaves parameters alone")
    {
        std::vector<double> p{1.0, -2.0, 3.0};
        const auto before = p;
        auto st = AdamState::zeros(3);
        const std::vector<double> g(3, 0.0);
        for (int i = 0; i < 10; ++i) adam_step(p, g, st, {});
        CHECK(p == before);
        CHECK(st.step == 10);
    }
    SUBCASE("constant gradient: update magnitude approaches lr")
    {
        std::vector<double> p{0.0};
        auto st = AdamState::zeros(1);
        const std::vector<double> g{0.37};
        double last = 0.0;
        for (int i = 0; i < 2000; ++i) {
            const double before = p[0];
            adam_step(p, g, st, {0.01, 0.9, 0.999, 1e-8});
            last = before - p[0];
        }
        CHECK(last == doctest::Approx(0.01).epsilon(1e-4));
    }
    SUBCASE("shape mismatch")
    {
        std::vector<double> p{0.0, 1.0};
        auto st = AdamState::zeros(1);
        const std::vector<double> g{0.0, 0.0};
        CHECK(code_of([&] { adam_step(p, g, st, {}); }) == Errc::ShapeMismatch);
    }
}

TEST_CASE("global norm clipping")
{
    std::vector<double> g{3.0, 4.0};
    CHECK(clip_global_norm(g, 5.0) == 5.0);
    CHECK(g == std::vector<double>{3.0, 4.0});
    CHECK(clip_global_norm(g, 1.0) == 5.0);
    CHECK(g[0] == doctest::Approx(0.6));
    CHECK(g[1] == doctest::Approx(0.8));
}

namespace {

TrainConfig tiny_config()
{
    TrainConfig cfg;
    cfg.timesteps = 6;
    cfg.batch_size = 4;
    cfg.hidden1 = 5;
    cfg.hidden2 = 4;
    cfg.training_steps = 30;
    cfg.dropout_rate = 0.2;
    cfg.seed = 3;
    return cfg;
}

BatchProvider fixed_batches(std::uint64_t seed)
{
    return [seed](std::uint64_t step) {
        Rng rng(mix_seed(seed, step));
        return testsupport::random_batch(rng, 6, 6, 4);
    };
}

}  // namespace

TEST_CASE("training is deterministic")
{
    const auto cfg = tiny_config();
    auto a = LstmModel::initialized(cfg.shape(), cfg.dropout_rate, 1);
    auto b = a;
    const auto ra = train(a, fixed_batches(5), cfg);
    const auto rb = train(b, fixed_batches(5), cfg);
    CHECK(ra.loss_trace.size() == 30);
    CHECK(ra.loss_trace == rb.loss_trace);
    CHECK(bit_equal(a.parameters(), b.parameters()));
}

TEST_CASE("checkpoint round trip, corruption and resume")
{
    testsupport::TempDir dir("ckpt");
    const auto cfg = tiny_config();
    auto model = LstmModel::initialized(cfg.shape(), cfg.dropout_rate, 4);

    SUBCASE("round trip is bit-exact")
    {
        Checkpoint ck{model, AdamState::zeros(model.parameters().size()), {{"note", "x"}}, {{"norm.mean", {1.5, -0.0}}}};
        ck.optimizer->first_moment[2] = 0.1;
        ck.optimizer->step = 7;
        save_checkpoint(ck, dir.path() / "m.ckpt");
        const auto back = load_checkpoint(dir.path() / "m.ckpt");
        CHECK(bit_equal(back.model.parameters(), model.parameters()));
        CHECK(back.model.shape() == model.shape());
        CHECK(back.model.dropout_rate() == model.dropout_rate());
        REQUIRE(back.optimizer);
        CHECK(back.optimizer->step == 7);
        CHECK(back.optimizer->first_moment == ck.optimizer->first_moment);
        CHECK(back.metadata.at("note") == "x");
        CHECK(bit_equal(back.extras.at("norm.mean"), ck.extras.at("norm.mean")));
        std::ifstream in(dir.path() / "m.ckpt", std::ios::binary);
        char magic[4];
        in.read(magic, 4);
        CHECK(std::string(magic, 4) == "SCK1");
    }
    SUBCASE("truncated file")
    {
        save_checkpoint({model, std::nullopt, {}, {}}, dir.path() / "m.ckpt");
        const auto size = std::filesystem::file_size(dir.path() / "m.ckpt");
        std::filesystem::resize_file(dir.path() / "m.ckpt", size - 9);
        CHECK(code_of([&] { load_checkpoint(dir.path() / "m.ckpt"); }) == Errc::CorruptCheckpoint);
        ingest::write_file(dir.path() / "bad.ckpt", "XXXX");
        CHECK(code_of([&] { load_checkpoint(dir.path() / "bad.ckpt"); }) == Errc::CorruptCheckpoint);
        CHECK(code_of([&] { load_checkpoint(dir.path() / "missing.ckpt"); }) == Errc::IoFailure);
    }
    SUBCASE("resume matches an uninterrupted run")
    {
        auto straight = model;
        const auto full = train(straight, fixed_batches(8), cfg);

        auto first = model;
        auto half = cfg;
        half.training_steps = 12;
        const auto part1 = train(first, fixed_batches(8), half);
        save_checkpoint({first, part1.optimizer, {}, {}}, dir.path() / "mid.ckpt");
        auto loaded = load_checkpoint(dir.path() / "mid.ckpt");
        const auto part2 = train(loaded.model, fixed_batches(8), cfg, *loaded.optimizer);

        auto joined = part1.loss_trace;
        joined.insert(joined.end(), part2.loss_trace.begin(), part2.loss_trace.end());
        CHECK(joined == full.loss_trace);
        CHECK(bit_equal(loaded.model.parameters(), straight.parameters()));
    }
}

TEST_CASE("predict_slice indexing rule")
{
    Rng rng(12);
    const auto m = LstmModel::initialized(LstmShape{6, 4, 3}, 0.3, 5);
    const Index T = 5;
    Eigen::MatrixXd slice(T + 1, 6);
    for (Index i = 0; i < slice.size(); ++i) slice.data()[i] = rng.normal();

    const Eigen::MatrixXd w1 = slice.topRows(T);
    const Eigen::MatrixXd w2 = slice.bottomRows(T);
    const auto seq1 = lstm_forward(m, w1);
    const auto seq2 = lstm_forward(m, w2);

    const auto exact = predict_slice(m, w1, T);
    REQUIRE(exact.size() == static_cast<std::size_t>(T));
    for (Index i = 0; i < T; ++i) CHECK(exact[i] == seq1(i));

    const auto longer = predict_slice(m, slice, T);
    REQUIRE(longer.size() == static_cast<std::size_t>(T + 1));
    for (Index i = 0; i < T; ++i) CHECK(longer[i] == doctest::Approx(seq1(i)).epsilon(1e-14));
    CHECK(longer[T] == doctest::Approx(seq2(T - 1)).epsilon(1e-14));

    const std::vector<Index> pos{T, 0, 2};
    const auto picked = predict_positions(m, slice, T, pos);
    CHECK(picked[0] == doctest::Approx(longer[T]).epsilon(1e-14));
    CHECK(picked[1] == doctest::Approx(longer[0]).epsilon(1e-14));
    CHECK(picked[2] == doctest::Approx(longer[2]).epsilon(1e-14));

    CHECK(code_of([&] { predict_slice(m, slice.topRows(T - 1), T); }) == Errc::SliceTooShort);
}

TEST_CASE("inference ignores dropout rate and seed")
{
    Rng rng(13);
    auto a = LstmModel::initialized(LstmShape{6, 4, 3}, 0.0, 5);
    auto b = a;
    b.set_dropout_rate(0.5);
    Eigen::MatrixXd slice(20, 6);
    for (Index i = 0; i < slice.size(); ++i) slice.data()[i] = rng.normal();
    CHECK(predict_slice(a, slice, 8) == predict_slice(b, slice, 8));
}

TEST_CASE("divergence surfaces as DivergedTraining")
{
    auto cfg = tiny_config();
    cfg.training_steps = 3;
    auto m = LstmModel::initialized(cfg.shape(), 0.0, 1);
    const BatchProvider poison = [](std::uint64_t step) {
        Rng rng(step);
        auto b = testsupport::random_batch(rng, 6, 6, 4);
        if (step == 1) b.targets(5, 0) = std::numeric_limits<double>::quiet_NaN();
        return b;
    };
    try {
        train(m, poison, cfg);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::DivergedTraining);
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
}
