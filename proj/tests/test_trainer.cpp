#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "actigen/trainer.hpp"
#include "test_util.hpp"

using namespace actigen;

namespace {

// independent scalar Adam for the two-step oracle
struct ScalarAdam {
    double m = 0, v = 0;
    int t = 0;
    double step(double& x, double g, double lr, double b1, double b2, double eps) {
        ++t;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        x -= lr * mhat / (std::sqrt(vhat) + eps);
        return x;
    }
};

std::vector<std::string> make_ids(int n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("ind_" + std::to_string(i));
    return ids;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("learning rate decays by the factor every interval") {
    TrainConfig cfg;  // 1e-3, /10 every 5 epochs, 15 epochs
    CHECK(testutil::rel_err(lr_at_epoch(0, cfg), 1e-3) < 1e-12);
    CHECK(testutil::rel_err(lr_at_epoch(4, cfg), 1e-3) < 1e-12);
    CHECK(testutil::rel_err(lr_at_epoch(5, cfg), 1e-4) < 1e-12);
    CHECK(testutil::rel_err(lr_at_epoch(9, cfg), 1e-4) < 1e-12);
    CHECK(testutil::rel_err(lr_at_epoch(10, cfg), 1e-5) < 1e-12);
    CHECK(testutil::rel_err(lr_at_epoch(14, cfg), 1e-5) < 1e-12);

    // piecewise constant: exactly ceil(epochs/interval) distinct values
    std::set<double> distinct;
    for (int e = 0; e < cfg.epochs; ++e) distinct.insert(lr_at_epoch(e, cfg));
    CHECK(distinct.size() == 3);
    for (int e = 0; e < cfg.epochs; ++e)
        CHECK(lr_at_epoch(e, cfg) == lr_at_epoch(5 * (e / 5), cfg));
}

TEST_CASE("shake weights have unit norm and symmetric means") {
    Rng rng(515);
    double mean[3] = {0, 0, 0};
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        const auto w = sample_shake_weights(rng);
        const double norm =
            std::sqrt(w.alpha[0] * w.alpha[0] + w.alpha[1] * w.alpha[1] + w.alpha[2] * w.alpha[2]);
        REQUIRE(std::abs(norm - 1.0) <= 1e-9);
        REQUIRE(w.alpha[0] >= 0.0);
        REQUIRE(w.alpha[1] >= 0.0);
        REQUIRE(w.alpha[2] >= 0.0);
        for (int c = 0; c < 3; ++c) mean[c] += w.alpha[static_cast<size_t>(c)];
    }
    // |gaussians| normalized land uniformly on the positive octant of the
    // sphere, whose coordinates are marginally |U(-1,1)|: mean 1/2
    for (int c = 0; c < 3; ++c) {
        mean[c] /= draws;
        CHECK(std::abs(mean[c] - 0.5) < 0.01);
    }
    CHECK(std::abs(mean[0] - mean[1]) < 0.01);
    CHECK(std::abs(mean[1] - mean[2]) < 0.01);
}

TEST_CASE("degenerate equal draws give equal weights") {
    const auto w = shake_from_draws({0.7, 0.7, 0.7});
    const double expect = 1.0 / std::sqrt(3.0);
    for (const double a : w.alpha) CHECK(a == doctest::Approx(expect).epsilon(1e-12));
    const auto neg = shake_from_draws({-0.7, 0.7, -0.7});  // sign is discarded
    for (const double a : neg.alpha) CHECK(a == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("fixed weights make the combined loss the scaled task mean") {
    const auto w = fixed_shake_weights();
    const std::array<double, 3> task{1.25, 0.5, 2.0};
    const double combined = combine(task, w.alpha);
    const double mean = (task[0] + task[1] + task[2]) / 3.0;
    CHECK(testutil::rel_err(combined, std::sqrt(3.0) * mean) < 1e-14);
}

TEST_CASE("cross entropy of uniform logits is log(bins)") {
    const int seq = 21, vocab = 100;
    std::vector<double> logits(static_cast<size_t>(seq) * vocab, 0.42);
    const auto targets = testutil::random_bins(seq - 1, vocab, 61);
    CHECK(testutil::rel_err(cross_entropy(logits.data(), seq, vocab, targets.data()),
                            std::log(100.0)) < 1e-12);
}

TEST_CASE("cross entropy saturates to zero on confident logits") {
    const int seq = 4, vocab = 5;
    const auto targets = testutil::random_bins(seq - 1, vocab, 62);
    std::vector<double> logits(static_cast<size_t>(seq) * vocab, 0.0);
    for (int t = 0; t < seq - 1; ++t) logits[static_cast<size_t>(t) * vocab + targets[t]] = 1000.0;
    CHECK(cross_entropy(logits.data(), seq, vocab, targets.data()) < 1e-6);
}

TEST_CASE("cross entropy matches an independent log-sum-exp oracle") {
    const int seq = 4, vocab = 5;
    std::vector<double> logits(static_cast<size_t>(seq) * vocab);
    testutil::fill_random(logits, 63, 3.0);
    const auto targets = testutil::random_bins(seq - 1, vocab, 64);

    double expect = 0;
    for (int t = 0; t < seq - 1; ++t) {
        double z = 0;
        for (int j = 0; j < vocab; ++j) z += std::exp(logits[static_cast<size_t>(t) * vocab + j]);
        expect += std::log(z) - logits[static_cast<size_t>(t) * vocab + targets[t]];
    }
    expect /= (seq - 1);
    CHECK(testutil::rel_err(cross_entropy(logits.data(), seq, vocab, targets.data()), expect) <
          1e-10);
}

TEST_CASE("cross entropy rejects out-of-range targets") {
    const int seq = 3, vocab = 5;
    std::vector<double> logits(static_cast<size_t>(seq) * vocab, 0.0);
    std::vector<uint16_t> targets{1, 5};
    CHECK_THROWS_AS((void)cross_entropy(logits.data(), seq, vocab, targets.data()),
                    std::invalid_argument);
}

TEST_CASE("batched loss agrees with the single-sequence op") {
    const ModelConfig cfg = tiny_model_config();
    auto params = init_params<double>(cfg, 71);
    const auto bins = testutil::random_bins(cfg.seq_len * kNumChannels, cfg.num_bins, 72);
    ForwardCache<double> cache;
    forward(bins.data(), 1, params, false, nullptr, cache);
    const auto task =
        combined_loss_grad<double>(cache, bins.data(), fixed_shake_weights().alpha, nullptr);

    for (int c = 0; c < kNumChannels; ++c) {
        // deinterleave this channel's logits and targets
        std::vector<double> logits(static_cast<size_t>(cfg.seq_len) * cfg.num_bins);
        std::vector<uint16_t> targets(static_cast<size_t>(cfg.seq_len) - 1);
        for (int t = 0; t < cfg.seq_len; ++t)
            for (int j = 0; j < cfg.num_bins; ++j)
                logits[static_cast<size_t>(t) * cfg.num_bins + j] =
                    cache.logits[(static_cast<size_t>(t) * kNumChannels + c) * cfg.num_bins + j];
        for (int t = 0; t + 1 < cfg.seq_len; ++t)
            targets[static_cast<size_t>(t)] =
                bins[(static_cast<size_t>(t) + 1) * kNumChannels + c];
        const double expect = cross_entropy(logits.data(), cfg.seq_len, cfg.num_bins,
                                            targets.data());
        CHECK(testutil::rel_err(task[static_cast<size_t>(c)], expect, 1e-12) < 1e-10);
    }
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
    std::vector<double> params{1.0, -2.0, 3.0};
    const std::vector<double> grads{0.0, 0.0, 0.0};
    AdamState<double> state;
    state.m = {0.5, 0.5, 0.5};
    state.v = {0.25, 0.25, 0.25};
    // zero the moments' history first so the update is exactly zero
    AdamState<double> fresh;
    auto p = params;
    adam_step(p, grads, fresh, 1e-3, 0.9, 0.999, 1e-8, nullptr);
    CHECK(p == params);
    // moments decay toward zero
    adam_step(p, grads, state, 1e-3, 0.9, 0.999, 1e-8, nullptr);
    CHECK(state.m[0] == doctest::Approx(0.45));
    CHECK(state.v[0] == doctest::Approx(0.25 * 0.999));
}

TEST_CASE("first adam step moves by about -lr") {
    std::vector<double> p{0.0};
    AdamState<double> state;
    adam_step(p, {1.0}, state, 1e-3, 0.9, 0.999, 1e-8, nullptr);
    // bias correction makes mhat = 1, vhat = 1: update = -lr / (1 + eps)
    CHECK(p[0] == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("adam matches a scalar reference over a quadratic") {
    std::vector<double> p{2.0};
    AdamState<double> state;
    double x = 2.0;
    ScalarAdam ref;
    for (int step = 0; step < 2; ++step) {
        const double g = p[0];  // gradient of x^2/2
        adam_step(p, {g}, state, 0.1, 0.9, 0.999, 1e-8, nullptr);
        ref.step(x, x, 0.1, 0.9, 0.999, 1e-8);
        CHECK(testutil::rel_err(p[0], x) < 1e-12);
    }
}

TEST_CASE("adam names the tensor holding a non-finite gradient") {
    const ModelConfig cfg = tiny_model_config();
    auto params = init_params<float>(cfg, 81);
    std::vector<float> grads(params.values.size(), 0.0f);
    const TensorSpec* w1 = params.layout.find("block0.ffn.w1");
    grads[w1->offset + 3] = std::numeric_limits<float>::quiet_NaN();
    AdamState<float> state;
    try {
        adam_step(params.values, grads, state, 1e-3, 0.9, 0.999, 1e-8, &params.layout);
        FAIL("expected a non-finite gradient error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("block0.ffn.w1") != std::string::npos);
    }
}

TEST_CASE("split assigns every individual to exactly one part") {
    const auto ids = make_ids(10);
    const auto split = split_by_individual(ids, {0.8, 0.1, 0.1}, 42);
    CHECK(split.train.size() == 8);
    CHECK(split.val.size() == 1);
    CHECK(split.test.size() == 1);
    std::set<std::string> all(split.train.begin(), split.train.end());
    all.insert(split.val.begin(), split.val.end());
    all.insert(split.test.begin(), split.test.end());
    CHECK(all.size() == 10);

    const auto again = split_by_individual(ids, {0.8, 0.1, 0.1}, 42);
    CHECK(again.train == split.train);
    CHECK(again.val == split.val);
    CHECK(again.test == split.test);

    const auto all_train = split_by_individual(ids, {1.0, 0.0, 0.0}, 42);
    CHECK(all_train.train.size() == 10);
    CHECK(all_train.val.empty());
    CHECK(all_train.test.empty());
}

TEST_CASE("split errors when a requested part would be empty") {
    const auto ids = make_ids(2);
    CHECK_THROWS_AS((void)split_by_individual(ids, {0.5, 0.4, 0.1}, 1), std::invalid_argument);
    CHECK_THROWS_AS((void)split_by_individual({}, {0.8, 0.1, 0.1}, 1), std::invalid_argument);
    CHECK_THROWS_AS((void)split_by_individual(ids, {0.5, 0.4, 0.2}, 1), std::invalid_argument);
}

TEST_CASE("training is deterministic under the seed") {
    const ModelConfig cfg = tiny_model_config();
    auto set = testutil::make_window_set(8, cfg.seq_len, cfg.num_bins, 91);
    std::vector<int64_t> windows(8);
    std::iota(windows.begin(), windows.end(), 0);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 4;
    tc.seed = 7;
    const auto a = train(set, windows, {}, cfg, tc, "");
    const auto b = train(set, windows, {}, cfg, tc, "");
    REQUIRE(a.steps.size() == b.steps.size());
    for (size_t i = 0; i < a.steps.size(); ++i) {
        CHECK(a.steps[i].combined == b.steps[i].combined);
        CHECK(a.steps[i].task_loss == b.steps[i].task_loss);
    }
    CHECK(a.params.values == b.params.values);
}

TEST_CASE("zero epochs returns the initialization") {
    const ModelConfig cfg = tiny_model_config();
    auto set = testutil::make_window_set(4, cfg.seq_len, cfg.num_bins, 92);
    std::vector<int64_t> windows{0, 1, 2, 3};
    TrainConfig tc;
    tc.epochs = 0;
    tc.seed = 11;
    const auto result = train(set, windows, {}, cfg, tc, "");
    const auto init = init_params<float>(cfg, derive_seed(tc.seed, 1));
    CHECK(result.params.values == init.values);
    CHECK(result.steps.empty());
}

TEST_CASE("400 steps memorize 32 windows on the tiny config") {
    ModelConfig cfg = tiny_model_config();
    cfg.dropout_p = 0.0;  // regularization off for the memorization check
    auto set = testutil::make_window_set(32, cfg.seq_len, cfg.num_bins, 93);
    std::vector<int64_t> windows(32);
    std::iota(windows.begin(), windows.end(), 0);

    TrainConfig tc;
    tc.epochs = 400;  // full batch: one step per epoch
    tc.batch_size = 32;
    tc.decay_factor = 1.0;  // constant learning rate for the overfit probe
    tc.initial_lr = 1e-2;
    tc.seed = 5;
    const auto result = train(set, windows, {}, cfg, tc, "");
    REQUIRE(result.steps.size() == 400);

    const double initial = result.steps.front().combined;
    double last10 = 0;
    for (size_t i = result.steps.size() - 10; i < result.steps.size(); ++i)
        last10 += result.steps[i].combined;
    last10 /= 10.0;
    CHECK(last10 < 0.5);
    CHECK(last10 < 0.1 * initial);  // >= 90% decrease from the initial loss
}

TEST_CASE("evaluate_loss reports the fixed-weight combination") {
    const ModelConfig cfg = tiny_model_config();
    auto set = testutil::make_window_set(6, cfg.seq_len, cfg.num_bins, 94);
    std::vector<int64_t> windows{0, 1, 2, 3, 4, 5};
    const auto params = init_params<float>(cfg, 3);
    const auto loss = evaluate_loss(params, set, windows, 4);
    const double expect = (loss[0] + loss[1] + loss[2]) / std::sqrt(3.0);
    CHECK(testutil::rel_err(loss[3], expect) < 1e-12);
    // an untrained model sits near the uniform loss log(num_bins) per task
    for (int c = 0; c < 3; ++c)
        CHECK(std::abs(loss[static_cast<size_t>(c)] - std::log(cfg.num_bins)) < 0.5);
}

}  // TEST_SUITE
