#pragma once

#include <array>
#include <optional>

#include "glim/config.hpp"
#include "glim/csv.hpp"
#include "glim/dataset.hpp"
#include "glim/glimpse.hpp"
#include "glim/task.hpp"

namespace glim::train {

// Fully resolved run settings (preset expanded, model geometry derived).
struct RunConfig {
    cfg::Config raw = cfg::Config::defaults();
    env::EnvConfig env;
    dmm::DmmConfig dmm_cfg;
    glimpse::GlimpseConfig glimpse_cfg;
    glimpse::Mode mode = glimpse::Mode::Surprise;
    bool full_mode = false;  // raw-state ablation; bypasses glimpse + memory
    uint64_t seed = 1;
    std::string out_dir;

    std::string preset;
    int collect_steps = 0;
    std::string collect_policy;  // "random" or "scripted"

    int windows = 0, bptt = 25, stages = 20, eval_episodes = 6;
    Real dmm_lr = Real(1e-3), glimpse_lr = Real(5e-4);
    uint64_t eval_seed = 0;
    bool resume = false;

    int rl_updates = 0, rl_rollout = 0, rl_envs = 0, rl_eval_every = 0,
        rl_eval_episodes = 0, rl_task_hidden = 8;
    Real rl_lr = Real(3e-4);
    uint64_t rl_eval_seed = 0;
    bool online = false;

    int cellpx = 12;
};

RunConfig resolve(const cfg::Config& c);

// Per-run metadata sink. Every artifact a run emits registers here; the
// manifest is rewritten after each registration.
class Manifest {
public:
    Manifest(std::string out_dir, std::string command, const cfg::Config& config);

    void add_output(const std::string& relative_path);
    void set_note(const std::string& key, const nlohmann::json& value);
    void save() const;

    const std::vector<std::string>& outputs() const { return outputs_; }

private:
    std::string out_dir_;
    nlohmann::json doc_;
    std::vector<std::string> outputs_;
};

// Rejects a second observation of the same environment state.
struct GlimpseGate {
    int64_t last = -1;
    void check(int64_t state_id) {
        if (state_id == last)
            throw ContractError("one observation per environment state");
        last = state_id;
    }
};

// Offline data collection with a uniform-random or scripted goal-seeking
// behavior policy; episodes complete, total steps >= collect_steps.
void collect_offline(const RunConfig& rc, const std::string& dataset_path);

env::Action scripted_goal_seeker(const env::EnvConfig& cfg, const env::FullState& s,
                                 rng::Engine& gen);

struct EvalStats {
    Real recon_error = 0;      // per-pixel squared error vs the full state
    Real glimpse_reward = 0;   // mean per-step surprise statistic
    Real policy_entropy = 0;
    Real obs_write_error = 0;  // masked error right after each write
    std::array<Real, env::kChannels> object_error{};        // NaN when absent
    std::array<Real, env::kChannels> object_cooccurrence{};
    int episodes = 0, horizon = 0;
};

// Rolls the model over held-out episodes (behavior policy replayed from
// eval seeds, disjoint from training seeds) and reports reconstruction
// and attention statistics.
EvalStats evaluate_model(const RunConfig& rc, const dmm::DmmModel& model,
                         const glimpse::GlimpsePolicy& policy, glimpse::Mode mode,
                         uint64_t eval_seed, int episodes, int horizon);

// Dataset-driven pretraining of the memory + glimpse policy. Emits
// dmm_loss.csv, glimpse_log.csv, stage_eval.csv, stage checkpoints and
// checkpoint_final.bin under rc.out_dir.
void pretrain(const RunConfig& rc, const std::string& dataset_path);

struct ReconRow {
    std::string preset, mode;
    double error = 0;
    int episodes = 0, horizon = 0;
};

// Table-style reconstruction evaluation of a pretrained checkpoint on
// held-out episodes; writes recon_eval.csv in rc.out_dir.
ReconRow evaluate_reconstruction(const RunConfig& rc, const std::string& checkpoint_path);

// PPO on the environment task. Frozen mode consumes a pretrained
// checkpoint; online mode trains memory + glimpse jointly from scratch;
// mode "full" feeds the raw state to the policy as the upper-bound
// ablation. Emits reward_curve.csv and task_checkpoint.bin.
void train_rl(const RunConfig& rc, const std::string& pretrain_checkpoint);

// Mean evaluation reward of a trained task checkpoint over n episodes.
double evaluate_task(const RunConfig& rc, const std::string& rl_dir, int episodes);

// Loads a pretraining checkpoint into freshly constructed models.
struct LoadedModels {
    dmm::DmmModel model;
    glimpse::GlimpsePolicy policy;
    glimpse::Mode mode;
    nlohmann::json meta;
};
LoadedModels load_pretrained(const RunConfig& rc, const std::string& checkpoint_path);

}  // namespace glim::train
