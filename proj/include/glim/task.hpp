#pragma once

#include "glim/adam.hpp"
#include "glim/dmm.hpp"

namespace glim::task {

struct TaskConfig {
    int in_channels = 8;
    int in_rows = 12, in_cols = 12;
    int hidden = 8;
    int stride = 1;  // first conv stride (2 halves large raw-state inputs)
    Real clip = Real(0.2);
    Real discount = Real(0.99);
    Real gae_lambda = Real(0.95);
    Real entropy_weight = Real(0.01);
    Real value_coef = Real(0.5);
    Real lrelu_slope = Real(0.1);
    int epochs = 4;
    int minibatch = 64;
    bool normalize_advantages = true;

    int trunk_rows() const { return in_rows / stride; }
    int trunk_cols() const { return in_cols / stride; }
};

// Movement policy: conv trunk over its input map, flattened into linear
// action-logit and value heads. The primary entry point accepts only the
// post-write memory map; raw grids are reachable solely through the
// explicitly named full-state ablation call.
class TaskPolicy {
public:
    explicit TaskPolicy(TaskConfig cfg);

    void init_params(rng::Engine& gen);
    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }
    const TaskConfig& config() const { return cfg_; }

    // (action logits [4], value) from a raw input map
    std::pair<Array, Real> forward_infer(const Array& input) const;
    std::pair<Var, Var> forward(Tape& t, const TapedParams& tp, const Array& input) const;

private:
    TaskConfig cfg_;
    ParamMap params_;
    Conv2d c1_, c2_;
    LinearLayer pi_head_, v_head_;
};

struct ActionSample {
    int action = 0;
    Real log_prob = 0;
    Real value = 0;
};

ActionSample task_action(const TaskPolicy& policy, const dmm::MemoryMap& memory_written,
                         rng::Engine& gen);
// Deterministic evaluation-mode action (argmax, lowest index on ties).
ActionSample task_action_argmax(const TaskPolicy& policy,
                                const dmm::MemoryMap& memory_written);
// Full-state ablation: the policy reads the raw one-hot grid.
ActionSample task_action_fullstate(const TaskPolicy& policy, const Array& grid,
                                   rng::Engine& gen);
ActionSample task_action_fullstate_argmax(const TaskPolicy& policy, const Array& grid);

// Generalized advantage estimation over one contiguous sequence.
// bootstrap_value is V(s_T) for the state after the last step; dones cut
// both the bootstrap and the recursion.
std::vector<Real> gae_advantages(const std::vector<Real>& rewards,
                                 const std::vector<Real>& values,
                                 const std::vector<uint8_t>& dones, Real bootstrap_value,
                                 Real discount, Real gae_lambda);

struct PpoSample {
    Array input;
    int action = 0;
    Real old_log_prob = 0;
    Real advantage = 0;
    Real value_target = 0;
};

struct PpoStats {
    Real policy_loss = 0, value_loss = 0, entropy = 0;
    int minibatches = 0;
};

// Clipped-surrogate update: K epochs of minibatches over the batch, one
// optimizer step per minibatch. Advantages are normalized per batch when
// configured.
PpoStats ppo_update(TaskPolicy& policy, Adam& opt, std::vector<PpoSample> batch,
                    rng::Engine& gen);

}  // namespace glim::task
