#pragma once

#include <optional>

#include "glim/adam.hpp"
#include "glim/dmm.hpp"

namespace glim::glimpse {

// Attention-control variants: surprise (prediction-error reward), uniform
// random, follow-the-agent, task-reward driven, and the variational
// log-likelihood reward.
enum class Mode { Surprise, Random, Follow, Environment, Variational };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);
// Modes whose location policy network is trained during pretraining.
bool mode_trains_policy(Mode m);

struct GlimpseConfig {
    int mem_channels = 8;
    int mem_rows = 12, mem_cols = 12;
    int rows = 12, cols = 12;  // location action space (state resolution)
    int hidden = 8;
    Real entropy_weight = Real(0.001);
    Real discount = Real(0.9);
    Real value_coef = Real(0.5);
    Real lrelu_slope = Real(0.1);

    int upsample() const {
        if (rows == mem_rows) return 1;
        if (rows == 2 * mem_rows) return 2;
        throw ConfigError("location grid must match memory rows or be exactly 2x");
    }
};

// Location policy: three conv layers over the memory map to per-cell
// logits (deconv-upsampled when the memory is downsampled). Value: three
// conv layers then a global average pool. Final layers start at zero so
// the initial policy is uniform and the initial value is zero.
class GlimpsePolicy {
public:
    explicit GlimpsePolicy(GlimpseConfig cfg);

    void init_params(rng::Engine& gen);
    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }
    const GlimpseConfig& config() const { return cfg_; }

    // [rows*cols] location logits
    Array logits_infer(const Array& memory) const;
    Real value_infer(const Array& memory) const;
    // probabilities as a [rows, cols] grid (the heatmap export format)
    Array probs_grid(const Array& memory) const;

    Var logits(Tape& t, const TapedParams& tp, const Array& memory) const;
    Var value(Tape& t, const TapedParams& tp, const Array& memory) const;

private:
    GlimpseConfig cfg_;
    ParamMap params_;
    Conv2d p1_, p2_, p3_conv_;
    Deconv2d p3_up_;
    Conv2d v1_, v2_, v3_;
};

struct Selection {
    env::GlimpseLocation loc;
    Real log_prob = 0;
    Real value = 0;
    Real entropy = 0;  // policy entropy at selection time (sampled modes)
};

// Picks the attention location from the pre-write memory. Sampled modes
// draw from the policy's categorical over all cells; random is uniform;
// follow returns boundary-clamped agent coordinates from the environment
// side channel (never from the memory).
Selection select_location(const GlimpsePolicy& policy, Mode mode,
                          const dmm::MemoryMap& memory,
                          const std::optional<std::pair<int, int>>& agent_pos,
                          rng::Engine& gen);

// Realized surprise: half the mean squared error between observation and
// pre-observation reconstruction under the window. Shares its arithmetic
// with the write/step losses via masked_sq_err_value.
Real surprise_reward(const env::Observation& obs, const Array& recon,
                     const env::AttentionMask& mask);

struct A2cStep {
    Array memory;  // pre-write memory the location was chosen from
    env::GlimpseLocation loc;
    Real reward = 0;
};

struct A2cStats {
    Real policy_loss = 0, value_loss = 0, entropy = 0, total = 0;
    Real mean_return = 0;
};

// Advantage actor-critic over one rollout window: n-step discounted
// returns bootstrapped by the value net, advantage-weighted policy
// gradient, value regression, entropy bonus. One optimizer step.
A2cStats a2c_update(GlimpsePolicy& policy, Adam& opt, const std::vector<A2cStep>& rollout,
                    Real bootstrap_value);

// Incremental variant used by the training loops: the taped policy forward
// that samples each location is the same graph the update differentiates,
// so no second forward pass is needed.
class A2cWindow {
public:
    explicit A2cWindow(GlimpsePolicy& policy);

    Selection sample(const Array& memory, rng::Engine& gen);
    void record_reward(Real r);  // reward for the latest sampled location
    size_t steps() const { return rewards_.size(); }
    A2cStats finish_update(Adam& opt, Real bootstrap_value);

private:
    GlimpsePolicy& policy_;
    Tape tape_;
    TapedParams tp_;
    std::vector<Var> lsm_, values_;
    std::vector<int> indices_;
    std::vector<Real> rewards_;
};

// Predicts the chosen location from consecutive memories and the previous
// action; its log-likelihood is the variational reward.
class VariationalCritic {
public:
    explicit VariationalCritic(GlimpseConfig cfg);

    void init_params(rng::Engine& gen);
    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }
    const GlimpseConfig& config() const { return cfg_; }

    // normalized log-distribution over the rows*cols location grid
    Array log_probs_infer(const Array& mem, const Array& mem_prev, int action_prev) const;
    Var log_probs(Tape& t, const TapedParams& tp, const Array& mem,
                  const Array& mem_prev, int action_prev) const;

private:
    GlimpseConfig cfg_;
    ParamMap params_;
    Conv2d q1_, q2_, q3_conv_;
    Deconv2d q3_up_;
    Array stack_inputs(const Array& mem, const Array& mem_prev, int action_prev) const;
};

Real variational_reward(const VariationalCritic& q, const Array& mem,
                        const Array& mem_prev, int action_prev, env::GlimpseLocation loc);

struct QStep {
    Array memory, memory_prev;
    int action_prev = 0;
    env::GlimpseLocation loc;
};

// One cross-entropy step on the actually chosen locations.
Real q_update(VariationalCritic& q, Adam& opt, const std::vector<QStep>& batch);

}  // namespace glim::glimpse
