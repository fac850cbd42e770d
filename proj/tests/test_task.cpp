#include <doctest.h>

#include <cmath>

#include "glim/sampling.hpp"
#include "glim/task.hpp"
#include "test_support.hpp"

using namespace glim;
using namespace glim::task;
using glim::test::random_array;

TEST_SUITE_BEGIN("unit");

namespace {

TaskConfig small_cfg() {
    TaskConfig cfg;
    cfg.in_channels = 3;
    cfg.in_rows = 6;
    cfg.in_cols = 6;
    cfg.hidden = 4;
    return cfg;
}

dmm::MemoryMap written(Array features) {
    return {std::move(features), dmm::Phase::PostWrite};
}

}  // namespace

TEST_CASE("task_action: phase contract on the memory input") {
    TaskPolicy policy(small_cfg());
    rng::Engine gen(1);
    policy.init_params(gen);
    dmm::MemoryMap pre{Array({3, 6, 6}), dmm::Phase::PreWrite};
    CHECK_THROWS_AS(task_action(policy, pre, gen), ContractError);
}

TEST_CASE("task_action: uniform logits give each action about 1/4") {
    TaskPolicy policy(small_cfg());
    rng::Engine gen(2);
    policy.init_params(gen);  // zero heads -> exactly uniform
    dmm::MemoryMap m = written(random_array({3, 6, 6}, gen));
    std::vector<int> counts(4, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) counts[static_cast<size_t>(task_action(policy, m, gen).action)]++;
    for (int c : counts) CHECK(std::abs(static_cast<double>(c) / n - 0.25) < 0.01);
}

TEST_CASE("task_action: a dominant logit is sampled essentially always") {
    TaskPolicy policy(small_cfg());
    rng::Engine gen(3);
    policy.init_params(gen);
    policy.params()["tpi.b"] = Array({4}, {0., 0., 50., 0.});
    dmm::MemoryMap m = written(random_array({3, 6, 6}, gen));
    int hits = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i)
        if (task_action(policy, m, gen).action == 2) ++hits;
    CHECK(static_cast<double>(hits) / n > 0.999);
}

TEST_CASE("task_action_argmax is deterministic across calls") {
    TaskPolicy policy(small_cfg());
    rng::Engine gen(4);
    policy.init_params(gen);
    for (auto& [name, a] : policy.params()) a = random_array(a.shape(), gen, -0.3, 0.3);
    dmm::MemoryMap m = written(random_array({3, 6, 6}, gen));
    auto first = task_action_argmax(policy, m);
    for (int i = 0; i < 10; ++i) {
        auto s = task_action_argmax(policy, m);
        CHECK(s.action == first.action);
        CHECK(s.log_prob == first.log_prob);
        CHECK(s.value == first.value);
    }
}

TEST_CASE("gae matches the hand recursion on a fixed 5-step sequence") {
    const std::vector<Real> rewards{1.0, -0.5, 0.25, 2.0, -1.0};
    const std::vector<Real> values{0.3, 0.1, -0.2, 0.5, 0.4};
    const std::vector<uint8_t> dones{0, 0, 0, 0, 0};
    const Real bootstrap = 0.7, g = 0.99, lam = 0.95;

    // oracle: delta_t + g*lam*A_{t+1}, computed explicitly backwards
    std::vector<Real> next_v{values[1], values[2], values[3], values[4], bootstrap};
    std::vector<Real> expected(5);
    Real acc = 0;
    for (int i = 4; i >= 0; --i) {
        const Real delta = rewards[static_cast<size_t>(i)] +
                           g * next_v[static_cast<size_t>(i)] -
                           values[static_cast<size_t>(i)];
        acc = delta + g * lam * acc;
        expected[static_cast<size_t>(i)] = acc;
    }

    auto adv = gae_advantages(rewards, values, dones, bootstrap, g, lam);
    REQUIRE(adv.size() == 5);
    for (size_t i = 0; i < 5; ++i) CHECK(adv[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("gae: a done flag cuts the recursion and the bootstrap") {
    const std::vector<Real> rewards{1.0, 1.0, 1.0};
    const std::vector<Real> values{0.0, 0.0, 0.0};
    const std::vector<uint8_t> dones{0, 1, 0};
    auto adv = gae_advantages(rewards, values, dones, /*bootstrap=*/100.0, 0.9, 0.9);
    // step 1 terminates: its advantage is just its reward
    CHECK(adv[1] == doctest::Approx(1.0));
    // step 0 sees only steps 0..1
    CHECK(adv[0] == doctest::Approx(1.0 + 0.9 * 0.9 * 1.0));
    // step 2 bootstraps into V(s_3)=100
    CHECK(adv[2] == doctest::Approx(1.0 + 0.9 * 100.0));
}

TEST_CASE("ppo: with ratio 1 the surrogate gradient is the vanilla policy gradient") {
    TaskConfig cfg = small_cfg();
    cfg.epochs = 1;
    cfg.minibatch = 8;
    cfg.normalize_advantages = false;
    cfg.entropy_weight = 0;
    cfg.value_coef = 0;
    TaskPolicy policyA(cfg), policyB(cfg);
    rng::Engine gen(5);
    policyA.init_params(gen);
    for (auto& [name, a] : policyA.params()) a = random_array(a.shape(), gen, -0.3, 0.3);
    policyB.params() = policyA.params();

    std::vector<PpoSample> batch;
    rng::Engine mgen(6);
    for (int i = 0; i < 8; ++i) {
        PpoSample s;
        s.input = random_array({3, 6, 6}, mgen);
        auto [logits, v] = policyA.forward_infer(s.input);
        Array lsm = log_softmax_infer(logits);
        s.action = i % 4;
        s.old_log_prob = lsm[static_cast<size_t>(s.action)];  // ratio == 1 exactly
        s.advantage = (i % 2 == 0) ? Real(0.5) : Real(-1.0);
        s.value_target = v;
        batch.push_back(std::move(s));
    }

    rng::Engine shufA(7);
    Adam optA(1e-3);
    ppo_update(policyA, optA, batch, shufA);

    // vanilla policy gradient: -mean(adv * log pi)
    Tape t;
    TapedParams tp = lift(t, policyB.params());
    std::vector<Var> terms;
    for (const auto& s : batch) {
        auto [logits, v] = policyB.forward(t, tp, s.input);
        (void)v;
        Var lsm = log_softmax(t, logits);
        terms.push_back(scale(t, gather1(t, lsm, s.action), -s.advantage));
    }
    Var loss = scale(t, add_n(t, terms), Real(1) / static_cast<Real>(batch.size()));
    t.backward(loss);
    Adam optB(1e-3);
    optB.step(policyB.params(), grads_of(t, tp));

    for (const auto& [name, a] : policyA.params()) {
        const Array& b = policyB.params().at(name);
        for (size_t i = 0; i < a.size(); ++i)
            REQUIRE(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
}

TEST_CASE("ppo: an already-clipped ratio contributes no gradient") {
    TaskConfig cfg = small_cfg();
    cfg.epochs = 1;
    cfg.minibatch = 4;
    cfg.normalize_advantages = false;
    cfg.entropy_weight = 0;
    cfg.value_coef = 0;
    TaskPolicy policy(cfg);
    rng::Engine gen(8);
    policy.init_params(gen);
    for (auto& [name, a] : policy.params()) a = random_array(a.shape(), gen, -0.3, 0.3);
    ParamMap before = policy.params();

    std::vector<PpoSample> batch;
    rng::Engine mgen(9);
    for (int i = 0; i < 4; ++i) {
        PpoSample s;
        s.input = random_array({3, 6, 6}, mgen);
        auto [logits, v] = policy.forward_infer(s.input);
        (void)v;
        Array lsm = log_softmax_infer(logits);
        s.action = i % 4;
        // ratio = exp(lp - old) = 1 + 2*clip, beyond the clip boundary
        s.old_log_prob =
            lsm[static_cast<size_t>(s.action)] - std::log(Real(1) + 2 * cfg.clip);
        s.advantage = Real(1.0);
        s.value_target = 0;
        batch.push_back(std::move(s));
    }
    rng::Engine shuf(10);
    Adam opt(1e-2);
    ppo_update(policy, opt, batch, shuf);
    for (const auto& [name, a] : policy.params()) {
        const Array& b = before.at(name);
        for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
    }
}

TEST_CASE("ppo: empty batch is a contract error") {
    TaskPolicy policy(small_cfg());
    rng::Engine gen(11);
    policy.init_params(gen);
    Adam opt(1e-3);
    rng::Engine shuf(12);
    std::vector<PpoSample> empty;
    CHECK_THROWS_AS(ppo_update(policy, opt, empty, shuf), ContractError);
}

TEST_CASE("ppo loss passes finite differences") {
    TaskConfig cfg = small_cfg();
    cfg.hidden = 3;
    TaskPolicy policy(cfg);
    rng::Engine gen(13);
    policy.init_params(gen);
    for (auto& [name, a] : policy.params()) a = random_array(a.shape(), gen, -0.3, 0.3);
    Array input = random_array({3, 6, 6}, gen);
    const Real old_lp = -1.1, adv = 0.8, ret = 0.4;
    auto r = glim::test::grad_check(
        [&](Tape& t, const TapedParams& tp) {
            auto [logits, v] = policy.forward(t, tp, input);
            Var lsm = log_softmax(t, logits);
            Var lp = gather1(t, lsm, 2);
            Var ratio = exp_op(t, sub_const(t, lp, Array::scalar(old_lp)));
            Array advArr = Array::scalar(adv);
            Var s1 = mul_const(t, ratio, advArr);
            Var s2 =
                mul_const(t, clamp(t, ratio, Real(1) - cfg.clip, Real(1) + cfg.clip), advArr);
            Var pg = scale(t, minimum(t, s1, s2), -1.0);
            Var vl = square(t, sub_const(t, v, Array::scalar(ret)));
            Var ent = scale(t, sum(t, mul(t, exp_op(t, lsm), lsm)), -1.0);
            return add(t, add(t, pg, scale(t, vl, cfg.value_coef)),
                       scale(t, ent, -cfg.entropy_weight));
        },
        policy.params());
    CHECK(r.worst_rel < 1e-4);
}

TEST_SUITE_END();
