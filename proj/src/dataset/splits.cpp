#include <algorithm>
#include <cctype>
#include <numeric>

#include <json.hpp>

#include "stepcount/dataset.hpp"
#include "stepcount/error.hpp"
#include "stepcount/rng.hpp"

namespace stepcount::dataset {

namespace {

constexpr std::uint64_t kFoldStream = 0xF01D;
constexpr std::uint64_t kBatchStream = 0xBA7C;

}  // namespace

std::vector<SplitPlan> split_mixed_kfold(std::size_t n_examples, std::size_t k, std::uint64_t seed)
{
    if (k < 2) fail(Errc::InvalidConfig, "k-fold split needs k >= 2, got " + std::to_string(k));
    if (n_examples < k) {
        fail(Errc::TooFewExamples, std::to_string(n_examples) + " examples cannot fill " + std::to_string(k) + " folds");
    }
    std::vector<std::size_t> order(n_examples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(seed, kFoldStream));
    rng.shuffle(std::span(order));

    // The first n % k folds take one extra example.
    std::vector<std::size_t> fold_of(n_examples);
    const std::size_t base = n_examples / k;
    const std::size_t extra = n_examples % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t j = 0; j < size; ++j) fold_of[order[pos++]] = f;
    }

    std::vector<SplitPlan> plans(k);
    for (std::size_t f = 0; f < k; ++f) plans[f].name = "cv" + std::to_string(f);
    for (std::size_t i = 0; i < n_examples; ++i) {
        for (std::size_t f = 0; f < k; ++f) {
            (fold_of[i] == f ? plans[f].test : plans[f].train).push_back(i);
        }
    }
    return plans;
}

bool natural_less(const std::string& a, const std::string& b)
{
    auto is_num = [](const std::string& s) {
        return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
    };
    if (is_num(a) && is_num(b)) {
        const auto strip = [](const std::string& s) {
            const auto nz = s.find_first_not_of('0');
            return nz == std::string::npos ? std::string("0") : s.substr(nz);
        };
        const auto x = strip(a);
        const auto y = strip(b);
        if (x.size() != y.size()) return x.size() < y.size();
        if (x != y) return x < y;
    }
    return a < b;
}

std::vector<std::string> distinct_participants(std::span<const std::string> participants)
{
    std::vector<std::string> out(participants.begin(), participants.end());
    std::sort(out.begin(), out.end(), natural_less);
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

SplitPlan split_leave_one_out(std::span<const std::string> participants, const std::string& held,
                              const std::string* validation)
{
    const auto people = distinct_participants(participants);
    if (people.size() < 2) {
        fail(Errc::SingleParticipant, "leave-one-out needs at least 2 participants, found " +
                                          std::to_string(people.size()));
    }
    auto known = [&](const std::string& p) { return std::find(people.begin(), people.end(), p) != people.end(); };
    if (!known(held)) fail(Errc::UnknownParticipant, "participant '" + held + "' has no examples");
    if (validation) {
        if (!known(*validation)) fail(Errc::UnknownParticipant, "participant '" + *validation + "' has no examples");
        if (*validation == held) fail(Errc::InvalidConfig, "validation participant equals the test participant");
        if (people.size() < 3) {
            fail(Errc::TooFewParticipants, "train/validation/test split needs at least 3 participants");
        }
    }

    SplitPlan plan;
    plan.name = "test=" + held + (validation ? ",valid=" + *validation : std::string());
    for (std::size_t i = 0; i < participants.size(); ++i) {
        if (participants[i] == held) {
            plan.test.push_back(i);
        } else if (validation && participants[i] == *validation) {
            plan.validation.push_back(i);
        } else {
            plan.train.push_back(i);
        }
    }
    return plan;
}

std::string split_plan_to_json(const SplitPlan& plan)
{
    nlohmann::ordered_json j;
    j["name"] = plan.name;
    j["train"] = plan.train;
    j["test"] = plan.test;
    if (!plan.validation.empty()) j["validation"] = plan.validation;
    return j.dump();
}

SplitPlan split_plan_from_json(const std::string& text)
{
    try {
        const auto j = nlohmann::json::parse(text);
        SplitPlan plan;
        plan.name = j.at("name").get<std::string>();
        plan.train = j.at("train").get<std::vector<std::size_t>>();
        plan.test = j.at("test").get<std::vector<std::size_t>>();
        if (j.contains("validation")) plan.validation = j.at("validation").get<std::vector<std::size_t>>();
        return plan;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::SchemaViolation, std::string("split plan JSON: ") + e.what());
    }
}

BatchSampler::BatchSampler(std::size_t n_examples, std::size_t batch_size, std::uint64_t seed)
    : n_(n_examples), batch_size_(batch_size), seed_(seed)
{
    if (batch_size < 1) fail(Errc::InvalidConfig, "batch_size must be >= 1");
    if (n_examples == 0) fail(Errc::EmptyTrainSet, "no training examples to batch");
}

std::size_t BatchSampler::batches_per_epoch() const { return (n_ + batch_size_ - 1) / batch_size_; }

const std::vector<std::size_t>& BatchSampler::permutation(std::uint64_t epoch_index) const
{
    if (epoch_index != cached_epoch_) {
        cached_perm_.resize(n_);
        std::iota(cached_perm_.begin(), cached_perm_.end(), std::size_t{0});
        Rng rng(mix_seed(mix_seed(seed_, kBatchStream), epoch_index));
        rng.shuffle(std::span(cached_perm_));
        cached_epoch_ = epoch_index;
    }
    return cached_perm_;
}

std::vector<std::vector<std::size_t>> BatchSampler::epoch(std::uint64_t epoch_index) const
{
    const auto& perm = permutation(epoch_index);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n_; start += batch_size_) {
        const std::size_t stop = std::min(n_, start + batch_size_);
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start), perm.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return out;
}

std::vector<std::size_t> BatchSampler::batch_for_step(std::uint64_t step) const
{
    const std::uint64_t per_epoch = batches_per_epoch();
    const std::uint64_t e = step / per_epoch;
    const std::size_t b = static_cast<std::size_t>(step % per_epoch);
    permutation(e);
    const std::size_t start = b * batch_size_;
    const std::size_t stop = std::min(n_, start + batch_size_);
    return {cached_perm_.begin() + static_cast<std::ptrdiff_t>(start),
            cached_perm_.begin() + static_cast<std::ptrdiff_t>(stop)};
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n_examples, std::size_t batch_size, std::uint64_t seed,
                                                   std::uint64_t epoch)
{
    if (n_examples == 0) return {};
    return BatchSampler(n_examples, batch_size, seed).epoch(epoch);
}

}  // namespace stepcount::dataset
