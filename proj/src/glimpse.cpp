#include "glim/glimpse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "glim/sampling.hpp"

namespace glim::glimpse {

Mode mode_from_string(const std::string& s) {
    if (s == "surprise") return Mode::Surprise;
    if (s == "random") return Mode::Random;
    if (s == "follow") return Mode::Follow;
    if (s == "environment") return Mode::Environment;
    if (s == "variational") return Mode::Variational;
    throw ConfigError("unknown glimpse mode '" + s + "'");
}

std::string mode_to_string(Mode m) {
    switch (m) {
        case Mode::Surprise: return "surprise";
        case Mode::Random: return "random";
        case Mode::Follow: return "follow";
        case Mode::Environment: return "environment";
        case Mode::Variational: return "variational";
    }
    throw ContractError("invalid mode");
}

bool mode_trains_policy(Mode m) {
    return m == Mode::Surprise || m == Mode::Environment || m == Mode::Variational;
}

GlimpsePolicy::GlimpsePolicy(GlimpseConfig cfg) : cfg_(cfg) {
    const int d = cfg_.mem_channels, h = cfg_.hidden;
    cfg_.upsample();  // validates geometry
    p1_ = {"gp1", d, h, 3, 1, 1};
    p2_ = {"gp2", h, h, 3, 1, 1};
    p3_conv_ = {"gp3", h, 1, 3, 1, 1};
    p3_up_ = {"gp3", h, 1, 4, 2, 1};
    v1_ = {"gv1", d, h, 3, 1, 1};
    v2_ = {"gv2", h, h, 3, 1, 1};
    v3_ = {"gv3", h, 1, 3, 1, 1};
}

void GlimpsePolicy::init_params(rng::Engine& gen) {
    params_.clear();
    p1_.init(params_, gen);
    p2_.init(params_, gen);
    // zero heads: the starting policy is uniform over cells and the
    // starting value estimate is exactly zero
    if (cfg_.upsample() == 2)
        p3_up_.init(params_, gen, /*zero_weights=*/true);
    else
        p3_conv_.init(params_, gen, /*zero_weights=*/true);
    v1_.init(params_, gen);
    v2_.init(params_, gen);
    v3_.init(params_, gen, /*zero_weights=*/true);
}

Array GlimpsePolicy::logits_infer(const Array& memory) const {
    Array h = leaky_relu_infer(p1_.infer(params_, memory), cfg_.lrelu_slope);
    h = leaky_relu_infer(p2_.infer(params_, h), cfg_.lrelu_slope);
    Array l = cfg_.upsample() == 2 ? p3_up_.infer(params_, h) : p3_conv_.infer(params_, h);
    return Array({cfg_.rows * cfg_.cols}, std::move(l.vec()));
}

Real GlimpsePolicy::value_infer(const Array& memory) const {
    Array h = leaky_relu_infer(v1_.infer(params_, memory), cfg_.lrelu_slope);
    h = leaky_relu_infer(v2_.infer(params_, h), cfg_.lrelu_slope);
    Array v = global_avg_pool_infer(v3_.infer(params_, h));
    return v[0];
}

Array GlimpsePolicy::probs_grid(const Array& memory) const {
    Array p = softmax_flat(logits_infer(memory));
    return Array({cfg_.rows, cfg_.cols}, std::move(p.vec()));
}

Var GlimpsePolicy::logits(Tape& t, const TapedParams& tp, const Array& memory) const {
    Var x = t.leaf(memory);
    Var h = leaky_relu(t, p1_(t, tp, x), cfg_.lrelu_slope);
    h = leaky_relu(t, p2_(t, tp, h), cfg_.lrelu_slope);
    Var l = cfg_.upsample() == 2 ? p3_up_(t, tp, h) : p3_conv_(t, tp, h);
    return flatten(t, l);
}

Var GlimpsePolicy::value(Tape& t, const TapedParams& tp, const Array& memory) const {
    Var x = t.leaf(memory);
    Var h = leaky_relu(t, v1_(t, tp, x), cfg_.lrelu_slope);
    h = leaky_relu(t, v2_(t, tp, h), cfg_.lrelu_slope);
    Var v = global_avg_pool(t, v3_(t, tp, h));
    return gather1(t, v, 0);
}

Selection select_location(const GlimpsePolicy& policy, Mode mode,
                          const dmm::MemoryMap& memory,
                          const std::optional<std::pair<int, int>>& agent_pos,
                          rng::Engine& gen) {
    if (memory.phase != dmm::Phase::PreWrite)
        throw ContractError("locations are chosen before the observation is written");
    const GlimpseConfig& cfg = policy.config();
    Selection sel;
    switch (mode) {
        case Mode::Random: {
            sel.loc.row = static_cast<int>(rng::uniform_int(gen, 0, cfg.rows - 1));
            sel.loc.col = static_cast<int>(rng::uniform_int(gen, 0, cfg.cols - 1));
            sel.log_prob = -std::log(static_cast<Real>(cfg.rows) * cfg.cols);
            sel.entropy = std::log(static_cast<Real>(cfg.rows) * cfg.cols);
            return sel;
        }
        case Mode::Follow: {
            if (!agent_pos)
                throw ContractError("follow mode needs the agent position side channel");
            sel.loc.row = std::clamp(agent_pos->first, 0, cfg.rows - 1);
            sel.loc.col = std::clamp(agent_pos->second, 0, cfg.cols - 1);
            return sel;
        }
        case Mode::Surprise:
        case Mode::Environment:
        case Mode::Variational: {
            Array probs = softmax_flat(policy.logits_infer(memory.features));
            const int idx = categorical_sample_index(probs, gen);
            sel.loc.row = idx / cfg.cols;
            sel.loc.col = idx % cfg.cols;
            sel.log_prob = std::log(
                std::max(probs[static_cast<size_t>(idx)], std::numeric_limits<Real>::min()));
            sel.value = policy.value_infer(memory.features);
            for (size_t i = 0; i < probs.size(); ++i)
                if (probs[i] > 0) sel.entropy -= probs[i] * std::log(probs[i]);
            return sel;
        }
    }
    throw ContractError("invalid mode");
}

Real surprise_reward(const env::Observation& obs, const Array& recon,
                     const env::AttentionMask& mask) {
    const int w = mask.window;
    if (obs.origin_r != mask.origin_r || obs.origin_c != mask.origin_c ||
        obs.crop.dim(1) != w || obs.crop.dim(2) != w)
        throw ContractError("observation and mask cover different windows");
    if (recon.dim(0) != obs.crop.dim(0) || recon.dim(1) != mask.mask.dim(1) ||
        recon.dim(2) != mask.mask.dim(2))
        throw ContractError("reconstruction does not match the mask grid");
    // paste the crop into state coordinates and reuse the shared masked
    // error definition
    Array canvas(recon.shape());
    for (int ch = 0; ch < recon.dim(0); ++ch)
        for (int r = 0; r < w; ++r)
            for (int c = 0; c < w; ++c)
                canvas.at(ch, mask.origin_r + r, mask.origin_c + c) = obs.crop.at(ch, r, c);
    return Real(0.5) * masked_sq_err_value(recon, canvas, mask.mask);
}

A2cStats a2c_update(GlimpsePolicy& policy, Adam& opt, const std::vector<A2cStep>& rollout,
                    Real bootstrap_value) {
    if (rollout.empty()) throw ContractError("a2c_update: empty rollout");
    const GlimpseConfig& cfg = policy.config();
    const size_t n = rollout.size();

    // n-step discounted returns, bootstrapped past the window end
    std::vector<Real> returns(n);
    Real acc = bootstrap_value;
    for (size_t i = n; i-- > 0;) {
        acc = rollout[i].reward + cfg.discount * acc;
        returns[i] = acc;
    }

    Tape t;
    TapedParams tp = lift(t, policy.params());
    std::vector<Var> pg_terms, v_terms, ent_terms;
    A2cStats stats;
    for (size_t i = 0; i < n; ++i) {
        Var lsm = log_softmax(t, policy.logits(t, tp, rollout[i].memory));
        Var v = policy.value(t, tp, rollout[i].memory);
        const Real adv = returns[i] - t.val(v)[0];
        const int idx = rollout[i].loc.row * cfg.cols + rollout[i].loc.col;
        pg_terms.push_back(scale(t, gather1(t, lsm, idx), -adv));
        v_terms.push_back(square(t, sub_const(t, v, Array::scalar(returns[i]))));
        Var ent = scale(t, sum(t, mul(t, exp_op(t, lsm), lsm)), -1.0);  // -sum p log p
        ent_terms.push_back(ent);
        stats.entropy += t.val(ent)[0];
        stats.mean_return += returns[i];
    }
    const Real inv = Real(1) / static_cast<Real>(n);
    Var pg = scale(t, add_n(t, pg_terms), inv);
    Var vl = scale(t, add_n(t, v_terms), inv);
    Var ent = scale(t, add_n(t, ent_terms), inv);
    Var total = add(t, add(t, pg, scale(t, vl, cfg.value_coef)),
                    scale(t, ent, -cfg.entropy_weight));
    stats.policy_loss = t.val(pg)[0];
    stats.value_loss = t.val(vl)[0];
    stats.entropy *= inv;
    stats.mean_return *= inv;
    stats.total = t.val(total)[0];

    t.backward(total);
    opt.step(policy.params(), grads_of(t, tp));
    return stats;
}

A2cWindow::A2cWindow(GlimpsePolicy& policy)
    : policy_(policy), tp_(lift(tape_, policy.params())) {}

Selection A2cWindow::sample(const Array& memory, rng::Engine& gen) {
    const GlimpseConfig& cfg = policy_.config();
    Var lsm = log_softmax(tape_, policy_.logits(tape_, tp_, memory));
    Var v = policy_.value(tape_, tp_, memory);
    const Array& lp = tape_.val(lsm);
    Array probs = Array::uninit(lp.shape());
    for (size_t i = 0; i < lp.size(); ++i) probs[i] = std::exp(lp[i]);
    const int idx = categorical_sample_index(probs, gen);

    Selection sel;
    sel.loc.row = idx / cfg.cols;
    sel.loc.col = idx % cfg.cols;
    sel.log_prob = lp[static_cast<size_t>(idx)];
    sel.value = tape_.val(v)[0];
    for (size_t i = 0; i < lp.size(); ++i) sel.entropy -= probs[i] * lp[i];

    lsm_.push_back(lsm);
    values_.push_back(v);
    indices_.push_back(idx);
    rewards_.push_back(Real(0));
    return sel;
}

void A2cWindow::record_reward(Real r) {
    if (rewards_.empty()) throw ContractError("no sampled location to reward");
    rewards_.back() = r;
}

A2cStats A2cWindow::finish_update(Adam& opt, Real bootstrap_value) {
    const size_t n = rewards_.size();
    if (n == 0) throw ContractError("a2c window is empty");
    const GlimpseConfig& cfg = policy_.config();

    std::vector<Real> returns(n);
    Real acc = bootstrap_value;
    for (size_t i = n; i-- > 0;) {
        acc = rewards_[i] + cfg.discount * acc;
        returns[i] = acc;
    }

    std::vector<Var> pg_terms, v_terms, ent_terms;
    A2cStats stats;
    for (size_t i = 0; i < n; ++i) {
        const Real adv = returns[i] - tape_.val(values_[i])[0];
        pg_terms.push_back(scale(tape_, gather1(tape_, lsm_[i], indices_[i]), -adv));
        v_terms.push_back(
            square(tape_, sub_const(tape_, values_[i], Array::scalar(returns[i]))));
        Var ent = scale(tape_, sum(tape_, mul(tape_, exp_op(tape_, lsm_[i]), lsm_[i])),
                        -1.0);
        ent_terms.push_back(ent);
        stats.entropy += tape_.val(ent)[0];
        stats.mean_return += returns[i];
    }
    const Real inv = Real(1) / static_cast<Real>(n);
    Var pg = scale(tape_, add_n(tape_, pg_terms), inv);
    Var vl = scale(tape_, add_n(tape_, v_terms), inv);
    Var ent = scale(tape_, add_n(tape_, ent_terms), inv);
    Var total = add(tape_, add(tape_, pg, scale(tape_, vl, cfg.value_coef)),
                    scale(tape_, ent, -cfg.entropy_weight));
    stats.policy_loss = tape_.val(pg)[0];
    stats.value_loss = tape_.val(vl)[0];
    stats.entropy *= inv;
    stats.mean_return *= inv;
    stats.total = tape_.val(total)[0];

    tape_.backward(total);
    opt.step(policy_.params(), grads_of(tape_, tp_));
    return stats;
}

VariationalCritic::VariationalCritic(GlimpseConfig cfg) : cfg_(cfg) {
    const int in = 2 * cfg_.mem_channels + env::kActions;
    const int h = cfg_.hidden;
    cfg_.upsample();
    q1_ = {"q1", in, h, 3, 1, 1};
    q2_ = {"q2", h, h, 3, 1, 1};
    q3_conv_ = {"q3", h, 1, 3, 1, 1};
    q3_up_ = {"q3", h, 1, 4, 2, 1};
}

void VariationalCritic::init_params(rng::Engine& gen) {
    params_.clear();
    q1_.init(params_, gen);
    q2_.init(params_, gen);
    // zero head: the untrained critic is exactly uniform
    if (cfg_.upsample() == 2)
        q3_up_.init(params_, gen, /*zero_weights=*/true);
    else
        q3_conv_.init(params_, gen, /*zero_weights=*/true);
}

Array VariationalCritic::stack_inputs(const Array& mem, const Array& mem_prev,
                                      int action_prev) const {
    Array act = action_planes(action_prev, env::kActions, cfg_.mem_rows, cfg_.mem_cols);
    return concat_ch_infer(concat_ch_infer(mem, mem_prev), act);
}

Array VariationalCritic::log_probs_infer(const Array& mem, const Array& mem_prev,
                                         int action_prev) const {
    Array x = stack_inputs(mem, mem_prev, action_prev);
    Array h = leaky_relu_infer(q1_.infer(params_, x), cfg_.lrelu_slope);
    h = leaky_relu_infer(q2_.infer(params_, h), cfg_.lrelu_slope);
    Array l = cfg_.upsample() == 2 ? q3_up_.infer(params_, h) : q3_conv_.infer(params_, h);
    return log_softmax_infer(Array({cfg_.rows * cfg_.cols}, std::move(l.vec())));
}

Var VariationalCritic::log_probs(Tape& t, const TapedParams& tp, const Array& mem,
                                 const Array& mem_prev, int action_prev) const {
    Var x = t.leaf(stack_inputs(mem, mem_prev, action_prev));
    Var h = leaky_relu(t, q1_(t, tp, x), cfg_.lrelu_slope);
    h = leaky_relu(t, q2_(t, tp, h), cfg_.lrelu_slope);
    Var l = cfg_.upsample() == 2 ? q3_up_(t, tp, h) : q3_conv_(t, tp, h);
    return log_softmax(t, flatten(t, l));
}

Real variational_reward(const VariationalCritic& q, const Array& mem,
                        const Array& mem_prev, int action_prev, env::GlimpseLocation loc) {
    Array lp = q.log_probs_infer(mem, mem_prev, action_prev);
    const int idx = loc.row * q.config().cols + loc.col;
    return lp[static_cast<size_t>(idx)];
}

Real q_update(VariationalCritic& q, Adam& opt, const std::vector<QStep>& batch) {
    if (batch.empty()) throw ContractError("q_update: empty batch");
    const int cols = q.config().cols;
    Tape t;
    TapedParams tp = lift(t, q.params());
    std::vector<Var> terms;
    for (const auto& s : batch) {
        Var lp = q.log_probs(t, tp, s.memory, s.memory_prev, s.action_prev);
        terms.push_back(scale(t, gather1(t, lp, s.loc.row * cols + s.loc.col), -1.0));
    }
    Var loss = scale(t, add_n(t, terms), Real(1) / static_cast<Real>(batch.size()));
    const Real out = t.val(loss)[0];
    t.backward(loss);
    opt.step(q.params(), grads_of(t, tp));
    return out;
}

}  // namespace glim::glimpse
