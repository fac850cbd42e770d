#include "glim/task.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "glim/sampling.hpp"

namespace glim::task {

TaskPolicy::TaskPolicy(TaskConfig cfg) : cfg_(cfg) {
    if (cfg_.in_rows % cfg_.stride || cfg_.in_cols % cfg_.stride)
        throw ConfigError("input size must be divisible by the trunk stride");
    const int h = cfg_.hidden;
    c1_ = {"tc1", cfg_.in_channels, h, 3, cfg_.stride, 1};
    c2_ = {"tc2", h, h, 3, 1, 1};
    const int flat = h * cfg_.trunk_rows() * cfg_.trunk_cols();
    pi_head_ = {"tpi", flat, env::kActions};
    v_head_ = {"tv", flat, 1};
}

void TaskPolicy::init_params(rng::Engine& gen) {
    params_.clear();
    c1_.init(params_, gen);
    c2_.init(params_, gen);
    pi_head_.init(params_, gen, /*zero_weights=*/true);  // uniform initial policy
    v_head_.init(params_, gen, /*zero_weights=*/true);
}

std::pair<Array, Real> TaskPolicy::forward_infer(const Array& input) const {
    Array h = leaky_relu_infer(c1_.infer(params_, input), cfg_.lrelu_slope);
    h = leaky_relu_infer(c2_.infer(params_, h), cfg_.lrelu_slope);
    const int flat_n = static_cast<int>(h.size());
    Array flat({flat_n}, std::move(h.vec()));
    Array logits = pi_head_.infer(params_, flat);
    Array v = v_head_.infer(params_, flat);
    return {std::move(logits), v[0]};
}

std::pair<Var, Var> TaskPolicy::forward(Tape& t, const TapedParams& tp,
                                        const Array& input) const {
    Var x = t.leaf(input);
    Var h = leaky_relu(t, c1_(t, tp, x), cfg_.lrelu_slope);
    h = leaky_relu(t, c2_(t, tp, h), cfg_.lrelu_slope);
    Var flat = flatten(t, h);
    return {pi_head_(t, tp, flat), gather1(t, v_head_(t, tp, flat), 0)};
}

namespace {

ActionSample sample_from(const Array& logits, Real value, rng::Engine& gen) {
    Array probs = softmax_flat(logits);
    const int a = categorical_sample_index(probs, gen);
    ActionSample s;
    s.action = a;
    s.log_prob = std::log(std::max(probs[static_cast<size_t>(a)],
                                   std::numeric_limits<Real>::min()));
    s.value = value;
    return s;
}

ActionSample argmax_from(const Array& logits, Real value) {
    int best = 0;
    for (size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[static_cast<size_t>(best)]) best = static_cast<int>(i);
    Array probs = softmax_flat(logits);
    ActionSample s;
    s.action = best;
    s.log_prob = std::log(std::max(probs[static_cast<size_t>(best)],
                                   std::numeric_limits<Real>::min()));
    s.value = value;
    return s;
}

void check_written(const dmm::MemoryMap& m) {
    if (m.phase != dmm::Phase::PostWrite)
        throw ContractError("the movement policy acts on the post-write memory map");
}

}  // namespace

ActionSample task_action(const TaskPolicy& policy, const dmm::MemoryMap& memory_written,
                         rng::Engine& gen) {
    check_written(memory_written);
    auto [logits, value] = policy.forward_infer(memory_written.features);
    return sample_from(logits, value, gen);
}

ActionSample task_action_argmax(const TaskPolicy& policy,
                                const dmm::MemoryMap& memory_written) {
    check_written(memory_written);
    auto [logits, value] = policy.forward_infer(memory_written.features);
    return argmax_from(logits, value);
}

ActionSample task_action_fullstate(const TaskPolicy& policy, const Array& grid,
                                   rng::Engine& gen) {
    auto [logits, value] = policy.forward_infer(grid);
    return sample_from(logits, value, gen);
}

ActionSample task_action_fullstate_argmax(const TaskPolicy& policy, const Array& grid) {
    auto [logits, value] = policy.forward_infer(grid);
    return argmax_from(logits, value);
}

std::vector<Real> gae_advantages(const std::vector<Real>& rewards,
                                 const std::vector<Real>& values,
                                 const std::vector<uint8_t>& dones, Real bootstrap_value,
                                 Real discount, Real gae_lambda) {
    const size_t n = rewards.size();
    if (values.size() != n || dones.size() != n)
        throw ContractError("gae: misaligned inputs");
    std::vector<Real> adv(n);
    Real running = 0;
    Real next_value = bootstrap_value;
    for (size_t i = n; i-- > 0;) {
        const Real not_done = dones[i] ? Real(0) : Real(1);
        const Real delta = rewards[i] + discount * not_done * next_value - values[i];
        running = delta + discount * gae_lambda * not_done * running;
        adv[i] = running;
        next_value = values[i];
    }
    return adv;
}

PpoStats ppo_update(TaskPolicy& policy, Adam& opt, std::vector<PpoSample> batch,
                    rng::Engine& gen) {
    if (batch.empty()) throw ContractError("ppo_update: empty batch");
    const TaskConfig& cfg = policy.config();

    if (cfg.normalize_advantages && batch.size() > 1) {
        Real mean = 0;
        for (const auto& s : batch) mean += s.advantage;
        mean /= static_cast<Real>(batch.size());
        Real var = 0;
        for (const auto& s : batch) var += (s.advantage - mean) * (s.advantage - mean);
        const Real sd = std::sqrt(var / static_cast<Real>(batch.size()));
        for (auto& s : batch) s.advantage = (s.advantage - mean) / (sd + Real(1e-8));
    }

    std::vector<size_t> order(batch.size());
    std::iota(order.begin(), order.end(), size_t{0});

    PpoStats stats;
    Real stat_w = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i-- > 1;) {
            const size_t j =
                static_cast<size_t>(rng::uniform_int(gen, 0, static_cast<int64_t>(i)));
            std::swap(order[i], order[j]);
        }
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.minibatch)) {
            const size_t end =
                std::min(order.size(), start + static_cast<size_t>(cfg.minibatch));
            Tape t;
            TapedParams tp = lift(t, policy.params());
            std::vector<Var> obj_terms, v_terms, ent_terms;
            for (size_t k = start; k < end; ++k) {
                const PpoSample& s = batch[order[k]];
                auto [logits, v] = policy.forward(t, tp, s.input);
                Var lsm = log_softmax(t, logits);
                Var lp = gather1(t, lsm, s.action);
                Var ratio = exp_op(t, sub_const(t, lp, Array::scalar(s.old_log_prob)));
                Array advArr = Array::scalar(s.advantage);
                Var s1 = mul_const(t, ratio, advArr);
                Var s2 = mul_const(t, clamp(t, ratio, Real(1) - cfg.clip, Real(1) + cfg.clip),
                                   advArr);
                obj_terms.push_back(minimum(t, s1, s2));
                v_terms.push_back(
                    square(t, sub_const(t, v, Array::scalar(s.value_target))));
                ent_terms.push_back(scale(t, sum(t, mul(t, exp_op(t, lsm), lsm)), -1.0));
            }
            const Real inv = Real(1) / static_cast<Real>(end - start);
            Var pg = scale(t, add_n(t, obj_terms), -inv);  // maximize the surrogate
            Var vl = scale(t, add_n(t, v_terms), inv);
            Var ent = scale(t, add_n(t, ent_terms), inv);
            Var total = add(t, add(t, pg, scale(t, vl, cfg.value_coef)),
                            scale(t, ent, -cfg.entropy_weight));
            stats.policy_loss += t.val(pg)[0];
            stats.value_loss += t.val(vl)[0];
            stats.entropy += t.val(ent)[0];
            stat_w += 1;
            ++stats.minibatches;
            t.backward(total);
            opt.step(policy.params(), grads_of(t, tp));
        }
    }
    if (stat_w > 0) {
        stats.policy_loss /= stat_w;
        stats.value_loss /= stat_w;
        stats.entropy /= stat_w;
    }
    if (!std::isfinite(stats.policy_loss) || !std::isfinite(stats.value_loss))
        throw NumericError("ppo_update produced a non-finite loss");
    return stats;
}

}  // namespace glim::task
