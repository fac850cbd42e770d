#include "glim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "glim/checkpoint.hpp"

namespace glim::train {

namespace fs = std::filesystem;

// --- configuration ----------------------------------------------------------

RunConfig resolve(const cfg::Config& c) {
    RunConfig rc;
    rc.raw = c;
    rc.preset = c.get_string("preset");
    rc.env = env::preset_by_name(rc.preset);

    auto ov = [&c](const char* key, int& target) {
        const int v = static_cast<int>(c.get_int(key));
        if (v >= 0) target = v;
    };
    ov("env.rows", rc.env.rows);
    ov("env.cols", rc.env.cols);
    ov("env.window", rc.env.window);
    ov("env.enemy_count", rc.env.enemy_count);
    ov("env.wall_layout", rc.env.wall_layout);
    ov("env.episode_cap", rc.env.episode_cap);
    rc.env.goal_reward = static_cast<Real>(c.get_float("env.goal_reward"));
    rc.env.death_reward = static_cast<Real>(c.get_float("env.death_reward"));
    rc.env.step_reward = static_cast<Real>(c.get_float("env.step_reward"));
    rc.env.validate();

    const std::string mode_s = c.get_string("mode");
    rc.full_mode = mode_s == "full";
    // the full-state ablation has no glimpse agent; the placeholder mode
    // below is never consulted in that configuration
    rc.mode = rc.full_mode ? glimpse::Mode::Random : glimpse::mode_from_string(mode_s);
    rc.seed = static_cast<uint64_t>(c.get_int("seed"));
    rc.out_dir = c.get_string("out_dir");

    rc.dmm_cfg.state_channels = env::kChannels;
    rc.dmm_cfg.rows = rc.env.rows;
    rc.dmm_cfg.cols = rc.env.cols;
    rc.dmm_cfg.mem_channels = static_cast<int>(c.get_int("model.mem_channels"));
    rc.dmm_cfg.hidden = static_cast<int>(c.get_int("model.hidden"));
    const int ms = static_cast<int>(c.get_int("model.mem_stride"));
    rc.dmm_cfg.mem_stride = ms != 0 ? ms : (rc.preset == "large" ? 2 : 1);
    rc.dmm_cfg.step_base_prewrite = c.get_string("model.step_base") == "prewrite";
    rc.dmm_cfg.alpha = static_cast<Real>(c.get_float("model.alpha"));
    rc.dmm_cfg.beta = static_cast<Real>(c.get_float("model.beta"));
    rc.dmm_cfg.validate();

    rc.glimpse_cfg.mem_channels = rc.dmm_cfg.mem_channels;
    rc.glimpse_cfg.mem_rows = rc.dmm_cfg.mem_rows();
    rc.glimpse_cfg.mem_cols = rc.dmm_cfg.mem_cols();
    rc.glimpse_cfg.rows = rc.env.rows;
    rc.glimpse_cfg.cols = rc.env.cols;
    rc.glimpse_cfg.hidden = static_cast<int>(c.get_int("pretrain.glimpse_hidden"));
    rc.glimpse_cfg.entropy_weight = static_cast<Real>(c.get_float("pretrain.entropy"));
    rc.glimpse_cfg.discount = static_cast<Real>(c.get_float("pretrain.discount"));
    rc.glimpse_cfg.value_coef = static_cast<Real>(c.get_float("pretrain.value_coef"));

    const int cs = static_cast<int>(c.get_int("collect.steps"));
    rc.collect_steps = cs > 0 ? cs : (rc.preset == "large" ? 200000 : 100000);
    const std::string cp = c.get_string("collect.policy");
    if (cp == "auto")
        rc.collect_policy = rc.preset == "large" ? "scripted" : "random";
    else if (cp == "random" || cp == "scripted")
        rc.collect_policy = cp;
    else
        throw ConfigError("collect.policy must be auto, random or scripted");

    rc.windows = static_cast<int>(c.get_int("pretrain.windows"));
    rc.bptt = static_cast<int>(c.get_int("pretrain.bptt"));
    rc.stages = static_cast<int>(c.get_int("pretrain.stages"));
    rc.eval_episodes = static_cast<int>(c.get_int("pretrain.eval_episodes"));
    rc.dmm_lr = static_cast<Real>(c.get_float("pretrain.lr"));
    rc.glimpse_lr = static_cast<Real>(c.get_float("pretrain.glimpse_lr"));
    rc.eval_seed = static_cast<uint64_t>(c.get_int("pretrain.eval_seed"));
    rc.resume = c.get_bool("pretrain.resume");
    if (rc.bptt < 2) throw ConfigError("pretrain.bptt must be >= 2");

    rc.rl_updates = static_cast<int>(c.get_int("rl.updates"));
    rc.rl_rollout = static_cast<int>(c.get_int("rl.rollout"));
    rc.rl_envs = static_cast<int>(c.get_int("rl.envs"));
    rc.rl_task_hidden = static_cast<int>(c.get_int("rl.task_hidden"));
    rc.rl_eval_every = static_cast<int>(c.get_int("rl.eval_every"));
    rc.rl_eval_episodes = static_cast<int>(c.get_int("rl.eval_episodes"));
    rc.rl_lr = static_cast<Real>(c.get_float("rl.lr"));
    rc.rl_eval_seed = static_cast<uint64_t>(c.get_int("rl.eval_seed"));
    rc.online = c.get_bool("rl.online");
    if (rc.rl_envs < 1 || rc.rl_rollout < rc.rl_envs)
        throw ConfigError("rl.rollout must be at least rl.envs");

    rc.cellpx = static_cast<int>(c.get_int("render.cellpx"));
    return rc;
}

// --- manifest ---------------------------------------------------------------

Manifest::Manifest(std::string out_dir, std::string command, const cfg::Config& config)
    : out_dir_(std::move(out_dir)) {
    fs::create_directories(out_dir_);
    doc_["schema"] = 1;
    doc_["command"] = std::move(command);
    doc_["config"] = config.to_json();
    doc_["outputs"] = nlohmann::json::array();
}

void Manifest::add_output(const std::string& relative_path) {
    if (std::find(outputs_.begin(), outputs_.end(), relative_path) == outputs_.end())
        outputs_.push_back(relative_path);
    save();
}

void Manifest::set_note(const std::string& key, const nlohmann::json& value) {
    doc_[key] = value;
    save();
}

void Manifest::save() const {
    nlohmann::json d = doc_;
    d["outputs"] = outputs_;
    const std::string path = out_dir_ + "/manifest.json";
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw IoError("cannot write " + tmp);
        f << d.dump(2) << "\n";
    }
    fs::rename(tmp, path);
}

// --- behavior policies --------------------------------------------------------

namespace {

bool enemy_adjacent(const env::FullState& s, int r, int c) {
    for (const auto& e : s.enemies)
        if (std::abs(e.r - r) + std::abs(e.c - c) <= 1) return true;
    return false;
}

}  // namespace

// Greedy move toward the goal, refusing cells on or next to an enemy;
// falls back to any safe move, then to a uniform random action.
env::Action scripted_goal_seeker(const env::EnvConfig& cfg, const env::FullState& s,
                                 rng::Engine& gen) {
    const int dr = s.goal_r - s.agent_r, dc = s.goal_c - s.agent_c;
    std::vector<env::Action> prefs;
    if (std::abs(dr) >= std::abs(dc)) {
        if (dr < 0) prefs.push_back(env::Action::Up);
        if (dr > 0) prefs.push_back(env::Action::Down);
        if (dc < 0) prefs.push_back(env::Action::Left);
        if (dc > 0) prefs.push_back(env::Action::Right);
    } else {
        if (dc < 0) prefs.push_back(env::Action::Left);
        if (dc > 0) prefs.push_back(env::Action::Right);
        if (dr < 0) prefs.push_back(env::Action::Up);
        if (dr > 0) prefs.push_back(env::Action::Down);
    }
    for (env::Action a : {env::Action::Up, env::Action::Down, env::Action::Left,
                          env::Action::Right})
        if (std::find(prefs.begin(), prefs.end(), a) == prefs.end()) prefs.push_back(a);

    static constexpr int kDr[4] = {-1, 1, 0, 0};
    static constexpr int kDc[4] = {0, 0, -1, 1};
    for (env::Action a : prefs) {
        const int nr = s.agent_r + kDr[static_cast<int>(a)];
        const int nc = s.agent_c + kDc[static_cast<int>(a)];
        if (nr < 0 || nc < 0 || nr >= cfg.rows || nc >= cfg.cols) continue;
        if (s.grid.at(env::kChanWall, nr, nc) != 0) continue;
        if (enemy_adjacent(s, nr, nc)) continue;
        return a;
    }
    return static_cast<env::Action>(rng::uniform_int(gen, 0, 3));
}

namespace {

env::Action behavior_action(const RunConfig& rc, const env::FullState& s,
                            rng::Engine& gen) {
    if (rc.collect_policy == "scripted") return scripted_goal_seeker(rc.env, s, gen);
    return static_cast<env::Action>(rng::uniform_int(gen, 0, 3));
}

}  // namespace

void collect_offline(const RunConfig& rc, const std::string& dataset_path) {
    env::Dataset ds;
    ds.config = rc.env;
    ds.config.seed = rc.seed;
    ds.seed_base = rc.seed * 1000000ull + 1;

    size_t total = 0;
    uint64_t e = 0;
    while (total < static_cast<size_t>(rc.collect_steps)) {
        env::EpisodeRecord ep;
        ep.seed = ds.seed_base + e;
        rng::Engine gen(ep.seed);
        env::FullState s = env::reset(rc.env, gen);
        rng::Engine act = rng::stream(ep.seed, 0xac7);
        while (!s.terminal) {
            env::StepRecord st;
            st.packed = env::pack_grid(s.grid);
            const env::Action a = behavior_action(rc, s, act);
            st.action = static_cast<uint8_t>(a);
            const env::StepOutcome out = env::env_step(rc.env, s, a);
            st.reward = static_cast<float>(out.reward);
            st.done = out.done;
            ep.steps.push_back(std::move(st));
        }
        total += ep.steps.size();
        ds.episodes.push_back(std::move(ep));
        ++e;
    }
    fs::create_directories(fs::path(dataset_path).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(dataset_path).parent_path());
    env::save_dataset(dataset_path, ds);
}

// --- evaluation ---------------------------------------------------------------

namespace {

// A held-out episode at least `horizon` steps long, replayed from eval
// seeds: deterministic across calls and identical for every mode.
struct EvalEpisode {
    std::vector<Array> grids;
    std::vector<int> actions;
};

EvalEpisode make_eval_episode(const RunConfig& rc, uint64_t eval_seed, int index,
                              int horizon) {
    for (int attempt = 0; attempt < 200; ++attempt) {
        const uint64_t eseed = eval_seed + static_cast<uint64_t>(index) * 256 +
                               static_cast<uint64_t>(attempt);
        rng::Engine gen(eseed);
        env::FullState s = env::reset(rc.env, gen);
        rng::Engine act = rng::stream(eseed, 0xe7a);
        EvalEpisode ep;
        while (!s.terminal && static_cast<int>(ep.grids.size()) < horizon) {
            ep.grids.push_back(s.grid);
            const env::Action a = behavior_action(rc, s, act);
            ep.actions.push_back(static_cast<int>(a));
            env::env_step(rc.env, s, a);
        }
        if (static_cast<int>(ep.grids.size()) >= horizon) return ep;
    }
    throw ConfigError("could not generate a held-out episode of the requested length");
}

}  // namespace

EvalStats evaluate_model(const RunConfig& rc, const dmm::DmmModel& model,
                         const glimpse::GlimpsePolicy& policy, glimpse::Mode mode,
                         uint64_t eval_seed, int episodes, int horizon) {
    EvalStats stats;
    stats.episodes = episodes;
    stats.horizon = horizon;
    const size_t pix = model.config().rows * model.config().cols * env::kChannels;
    std::array<double, env::kChannels> obj_err_sum{}, obj_err_cnt{}, obj_seen{};
    double err_sum = 0, reward_sum = 0, entropy_sum = 0, write_err_sum = 0;
    long steps_total = 0, windows_total = 0;

    for (int j = 0; j < episodes; ++j) {
        EvalEpisode ep = make_eval_episode(rc, eval_seed, j, horizon);
        rng::Engine sample_rng = rng::stream(eval_seed, 0x5e1ec7 + static_cast<uint64_t>(j));
        dmm::MemoryMap memory = model.empty_map();
        for (int t = 0; t < horizon; ++t) {
            env::FullState shell;
            shell.grid = ep.grids[static_cast<size_t>(t)];
            const Array recon = model.reconstruct_infer(memory);
            // per-pixel squared error against the true, unobserved state
            double err = 0;
            for (size_t i = 0; i < recon.size(); ++i) {
                const double d = recon[i] - shell.grid[i];
                err += d * d;
            }
            err_sum += err / static_cast<double>(pix);
            // object-conditional error on the object's own channel
            const size_t plane =
                static_cast<size_t>(model.config().rows) * model.config().cols;
            for (int ch = 0; ch < env::kChannels; ++ch)
                for (size_t i = 0; i < plane; ++i)
                    if (shell.grid[ch * plane + i] != 0) {
                        const double d = recon[ch * plane + i] - 1.0;
                        obj_err_sum[static_cast<size_t>(ch)] += d * d;
                        obj_err_cnt[static_cast<size_t>(ch)] += 1;
                    }

            std::optional<std::pair<int, int>> agent_pos;
            if (mode == glimpse::Mode::Follow)
                agent_pos = env::agent_position(shell.grid);
            glimpse::Selection sel =
                glimpse::select_location(policy, mode, memory, agent_pos, sample_rng);
            if (glimpse::mode_trains_policy(mode)) {
                Array probs = policy.probs_grid(memory.features);
                double h = 0;
                for (size_t i = 0; i < probs.size(); ++i)
                    if (probs[i] > 0) h -= probs[i] * std::log(probs[i]);
                entropy_sum += h;
            } else if (mode == glimpse::Mode::Random) {
                entropy_sum += std::log(static_cast<double>(rc.env.rows) * rc.env.cols);
            }
            auto [obs, mask] = env::extract_observation(rc.env, shell, sel.loc);
            reward_sum += glimpse::surprise_reward(obs, recon, mask);
            // window/object co-occurrence
            for (int ch = 0; ch < env::kChannels; ++ch) {
                bool seen = false;
                for (int r = 0; r < mask.window && !seen; ++r)
                    for (int c = 0; c < mask.window; ++c)
                        if (shell.grid.at(ch, mask.origin_r + r, mask.origin_c + c) != 0) {
                            seen = true;
                            break;
                        }
                if (seen) obj_seen[static_cast<size_t>(ch)] += 1;
            }
            ++windows_total;

            dmm::MemoryMap written = model.write_infer(memory, obs, mask);
            const Array recon_w = model.reconstruct_infer(
                dmm::MemoryMap{written.features, dmm::Phase::PreWrite});
            write_err_sum +=
                masked_sq_err_value(recon_w, model.obs_canvas(obs), mask.mask);
            memory = model.step_infer(written, memory, ep.actions[static_cast<size_t>(t)]);
            memory.phase = dmm::Phase::PreWrite;
            ++steps_total;
        }
    }

    stats.recon_error = static_cast<Real>(err_sum / static_cast<double>(steps_total));
    stats.glimpse_reward = static_cast<Real>(reward_sum / static_cast<double>(steps_total));
    stats.policy_entropy = static_cast<Real>(entropy_sum / static_cast<double>(steps_total));
    stats.obs_write_error =
        static_cast<Real>(write_err_sum / static_cast<double>(steps_total));
    for (int ch = 0; ch < env::kChannels; ++ch) {
        const auto c = static_cast<size_t>(ch);
        stats.object_error[c] =
            obj_err_cnt[c] > 0
                ? static_cast<Real>(obj_err_sum[c] / obj_err_cnt[c])
                : std::numeric_limits<Real>::quiet_NaN();  // object absent
        stats.object_cooccurrence[c] =
            static_cast<Real>(obj_seen[c] / static_cast<double>(windows_total));
    }
    return stats;
}

// --- pretraining ----------------------------------------------------------------

namespace {

struct PretrainState {
    dmm::DmmModel model;
    glimpse::GlimpsePolicy policy;
    glimpse::VariationalCritic critic;
    Adam dmm_opt, glimpse_opt, q_opt;
    rng::Engine sample_rng;

    int iteration = 0;   // completed windows
    int epoch = 0;
    size_t order_pos = 0;
    size_t step_off = 0;
    long episode_counter = 0;
    dmm::MemoryMap carried;
    Array prev_memory;   // previous pre-write memory (variational critic input)
    int prev_action = 0;
    // per-episode accumulators for the glimpse log
    double ep_reward = 0, ep_entropy = 0;
    long ep_steps = 0;

    PretrainState(const RunConfig& rc)
        : model(rc.dmm_cfg),
          policy(rc.glimpse_cfg),
          critic(rc.glimpse_cfg),
          dmm_opt(rc.dmm_lr),
          glimpse_opt(rc.glimpse_lr),
          q_opt(rc.glimpse_lr),
          sample_rng(rng::stream(rc.seed, 0x91)) {
        carried = model.empty_map();
        prev_memory = carried.features;
    }
};

std::vector<size_t> episode_order(const env::Dataset& ds, uint64_t seed, int epoch) {
    std::vector<size_t> order(ds.episodes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng::Engine g = rng::stream(seed, 0xe90c + static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i-- > 1;) {
        const size_t j = static_cast<size_t>(rng::uniform_int(g, 0, static_cast<int64_t>(i)));
        std::swap(order[i], order[j]);
    }
    return order;
}

void save_pretrain_checkpoint(const std::string& path, const RunConfig& rc,
                              PretrainState& st, const env::Dataset& ds) {
    ParamMap arrays;
    for (const auto& [k, v] : st.model.params()) arrays["dmm." + k] = v;
    if (glimpse::mode_trains_policy(rc.mode))
        for (const auto& [k, v] : st.policy.params()) arrays["glimpse." + k] = v;
    if (rc.mode == glimpse::Mode::Variational)
        for (const auto& [k, v] : st.critic.params()) arrays["q." + k] = v;
    for (const auto& [k, v] : st.dmm_opt.first_moments()) arrays["adam.dmm.m." + k] = v;
    for (const auto& [k, v] : st.dmm_opt.second_moments()) arrays["adam.dmm.v." + k] = v;
    for (const auto& [k, v] : st.glimpse_opt.first_moments())
        arrays["adam.glimpse.m." + k] = v;
    for (const auto& [k, v] : st.glimpse_opt.second_moments())
        arrays["adam.glimpse.v." + k] = v;
    for (const auto& [k, v] : st.q_opt.first_moments()) arrays["adam.q.m." + k] = v;
    for (const auto& [k, v] : st.q_opt.second_moments()) arrays["adam.q.v." + k] = v;
    arrays["carry.memory"] = st.carried.features;
    arrays["carry.prev_memory"] = st.prev_memory;

    nlohmann::json meta;
    meta["mode"] = glimpse::mode_to_string(rc.mode);
    meta["preset"] = rc.preset;
    meta["env"] = env::env_config_json(rc.env);
    meta["mem_channels"] = rc.dmm_cfg.mem_channels;
    meta["mem_stride"] = rc.dmm_cfg.mem_stride;
    meta["hidden"] = rc.dmm_cfg.hidden;
    meta["glimpse_hidden"] = rc.glimpse_cfg.hidden;
    meta["iteration"] = st.iteration;
    meta["epoch"] = st.epoch;
    meta["order_pos"] = st.order_pos;
    meta["step_off"] = st.step_off;
    meta["episode_counter"] = st.episode_counter;
    meta["prev_action"] = st.prev_action;
    meta["ep_reward"] = st.ep_reward;
    meta["ep_entropy"] = st.ep_entropy;
    meta["ep_steps"] = st.ep_steps;
    meta["sample_rng"] = rng::save_state(st.sample_rng);
    meta["adam_steps"] = {{"dmm", st.dmm_opt.steps_taken()},
                          {"glimpse", st.glimpse_opt.steps_taken()},
                          {"q", st.q_opt.steps_taken()}};
    meta["dataset_seed_base"] = ds.seed_base;
    meta["dataset_episodes"] = ds.episodes.size();
    save_checkpoint(path, arrays, meta);
}

void split_prefix(const ParamMap& arrays, const std::string& prefix, ParamMap& out) {
    for (const auto& [k, v] : arrays)
        if (k.rfind(prefix, 0) == 0) out[k.substr(prefix.size())] = v;
}

void load_pretrain_checkpoint(const std::string& path, const RunConfig& rc,
                              PretrainState& st) {
    Checkpoint ck = load_checkpoint(path);
    ParamMap dmm_p, gl_p, q_p;
    split_prefix(ck.arrays, "dmm.", dmm_p);
    split_prefix(ck.arrays, "glimpse.", gl_p);
    split_prefix(ck.arrays, "q.", q_p);
    // "q." also matches nothing else; adam entries carry their own prefix
    ParamMap tmp;
    split_prefix(ck.arrays, "adam.dmm.m.", tmp);
    st.dmm_opt.first_moments() = tmp;
    tmp.clear();
    split_prefix(ck.arrays, "adam.dmm.v.", tmp);
    st.dmm_opt.second_moments() = tmp;
    tmp.clear();
    split_prefix(ck.arrays, "adam.glimpse.m.", tmp);
    st.glimpse_opt.first_moments() = tmp;
    tmp.clear();
    split_prefix(ck.arrays, "adam.glimpse.v.", tmp);
    st.glimpse_opt.second_moments() = tmp;
    tmp.clear();
    split_prefix(ck.arrays, "adam.q.m.", tmp);
    st.q_opt.first_moments() = tmp;
    tmp.clear();
    split_prefix(ck.arrays, "adam.q.v.", tmp);
    st.q_opt.second_moments() = tmp;

    st.model.params() = dmm_p;
    if (!gl_p.empty()) st.policy.params() = gl_p;
    if (!q_p.empty()) st.critic.params() = q_p;
    st.carried = {ck.arrays.at("carry.memory"), dmm::Phase::PreWrite};
    st.prev_memory = ck.arrays.at("carry.prev_memory");

    st.iteration = ck.meta.at("iteration").get<int>();
    st.epoch = ck.meta.at("epoch").get<int>();
    st.order_pos = ck.meta.at("order_pos").get<size_t>();
    st.step_off = ck.meta.at("step_off").get<size_t>();
    st.episode_counter = ck.meta.at("episode_counter").get<long>();
    st.prev_action = ck.meta.at("prev_action").get<int>();
    st.ep_reward = ck.meta.at("ep_reward").get<double>();
    st.ep_entropy = ck.meta.at("ep_entropy").get<double>();
    st.ep_steps = ck.meta.at("ep_steps").get<long>();
    st.sample_rng = rng::load_state(ck.meta.at("sample_rng").get<std::string>());
    st.dmm_opt.set_steps_taken(ck.meta.at("adam_steps").at("dmm").get<int>());
    st.glimpse_opt.set_steps_taken(ck.meta.at("adam_steps").at("glimpse").get<int>());
    st.q_opt.set_steps_taken(ck.meta.at("adam_steps").at("q").get<int>());
}

std::string stage_name(int stage) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "checkpoint_stage_%02d.bin", stage);
    return buf;
}

std::vector<std::string> eval_row(int stage, int window, const EvalStats& s) {
    using csvio::fmt_real;
    std::vector<std::string> row{std::to_string(stage), std::to_string(window),
                                 fmt_real(s.recon_error), fmt_real(s.glimpse_reward),
                                 fmt_real(s.policy_entropy), fmt_real(s.obs_write_error)};
    for (int ch = 0; ch < env::kChannels; ++ch) {
        const Real v = s.object_error[static_cast<size_t>(ch)];
        row.push_back(std::isnan(v) ? "" : fmt_real(v));  // empty: object absent
    }
    for (int ch = 0; ch < env::kChannels; ++ch)
        row.push_back(fmt_real(s.object_cooccurrence[static_cast<size_t>(ch)]));
    return row;
}

}  // namespace

void pretrain(const RunConfig& rc, const std::string& dataset_path) {
    env::Dataset ds = env::load_dataset(dataset_path);
    if (ds.config.rows != rc.env.rows || ds.config.cols != rc.env.cols ||
        ds.config.window != rc.env.window)
        throw ConfigError("dataset was collected on a different environment setup");
    // held-out evaluation episodes must not reuse training seeds
    const uint64_t eval_lo = rc.eval_seed;
    const uint64_t eval_hi =
        rc.eval_seed + static_cast<uint64_t>(rc.eval_episodes) * 256 + 256;
    if (ds.seed_base < eval_hi &&
        ds.seed_base + ds.episodes.size() > eval_lo)
        throw ConfigError("training and evaluation episode seeds overlap");

    Manifest manifest(rc.out_dir, "pretrain", rc.raw);
    PretrainState st(rc);
    rng::Engine init_rng = rng::stream(rc.seed, 0x171);
    st.model.init_params(init_rng);
    st.policy.init_params(init_rng);
    st.critic.init_params(init_rng);

    csvio::MetricLog loss_log({"iteration", "write_loss", "step_loss", "mem_reg",
                               "step_reg", "total"});
    csvio::MetricLog glimpse_log({"episode", "mode", "mean_surprise", "policy_entropy"});
    csvio::MetricLog stage_log({"stage", "window", "recon_error", "surprise_reward",
                                "policy_entropy", "obs_write_error", "err_agent",
                                "err_wall", "err_enemy", "err_goal", "cooc_agent",
                                "cooc_wall", "cooc_enemy", "cooc_goal"});

    const std::string final_path = rc.out_dir + "/checkpoint_final.bin";
    if (rc.resume && fs::exists(final_path)) {
        load_pretrain_checkpoint(final_path, rc, st);
        loss_log.load_existing(rc.out_dir + "/dmm_loss.csv");
        if (fs::exists(rc.out_dir + "/glimpse_log.csv"))
            glimpse_log.load_existing(rc.out_dir + "/glimpse_log.csv");
        stage_log.load_existing(rc.out_dir + "/stage_eval.csv");
    }

    const int stage_every = std::max(1, rc.windows / std::max(1, rc.stages));
    std::vector<size_t> order = episode_order(ds, rc.seed, st.epoch);

    auto save_logs = [&] {
        loss_log.save(rc.out_dir + "/dmm_loss.csv");
        glimpse_log.save(rc.out_dir + "/glimpse_log.csv");
        stage_log.save(rc.out_dir + "/stage_eval.csv");
    };
    auto run_stage_eval = [&](int stage) {
        EvalStats s = evaluate_model(rc, st.model, st.policy, rc.mode, rc.eval_seed,
                                     rc.eval_episodes, rc.bptt);
        stage_log.add_row(eval_row(stage, st.iteration, s));
    };

    if (st.iteration == 0) run_stage_eval(0);

    while (st.iteration < rc.windows) {
        // locate the next window with at least 2 steps
        const env::EpisodeRecord* ep = &ds.episodes[order[st.order_pos]];
        while (ep->steps.size() < st.step_off + 2) {
            // episode exhausted: emit its glimpse-log row and move on
            if (st.ep_steps > 0) {
                glimpse_log.add_row({std::to_string(st.episode_counter),
                                     glimpse::mode_to_string(rc.mode),
                                     csvio::fmt_real(st.ep_reward / st.ep_steps),
                                     csvio::fmt_real(st.ep_entropy / st.ep_steps)});
                ++st.episode_counter;
                st.ep_reward = st.ep_entropy = 0;
                st.ep_steps = 0;
            }
            st.step_off = 0;
            st.carried = st.model.empty_map();
            st.prev_memory = st.carried.features;
            st.prev_action = 0;
            ++st.order_pos;
            if (st.order_pos >= order.size()) {
                st.order_pos = 0;
                ++st.epoch;
                order = episode_order(ds, rc.seed, st.epoch);
            }
            ep = &ds.episodes[order[st.order_pos]];
        }
        const size_t T = std::min<size_t>(static_cast<size_t>(rc.bptt),
                                          ep->steps.size() - st.step_off);

        Tape tape;
        TapedParams tp = lift(tape, st.model.params());
        dmm::RolloutGraph graph(st.model, tape, tp, st.carried);
        const bool trains_policy = glimpse::mode_trains_policy(rc.mode);
        std::optional<glimpse::A2cWindow> a2c;
        if (trains_policy) a2c.emplace(st.policy);
        std::vector<glimpse::QStep> q_steps;

        for (size_t i = 0; i < T; ++i) {
            const env::StepRecord& rec = ep->steps[st.step_off + i];
            env::FullState shell;
            shell.grid = env::unpack_grid(ds.config, rec.packed);
            const Array& memory_now = graph.memory_value();
            const Array& recon_now = graph.recon_value();

            glimpse::Selection sel;
            if (trains_policy) {
                sel = a2c->sample(memory_now, st.sample_rng);
            } else {
                std::optional<std::pair<int, int>> agent_pos;
                if (rc.mode == glimpse::Mode::Follow)
                    agent_pos = env::agent_position(shell.grid);
                dmm::MemoryMap view{memory_now, dmm::Phase::PreWrite};
                sel = glimpse::select_location(st.policy, rc.mode, view, agent_pos,
                                               st.sample_rng);
            }

            auto [obs, mask] = env::extract_observation(rc.env, shell, sel.loc);
            const Real surprise = glimpse::surprise_reward(obs, recon_now, mask);
            if (trains_policy) {
                Real reward = surprise;
                if (rc.mode == glimpse::Mode::Environment)
                    reward = static_cast<Real>(rec.reward);
                else if (rc.mode == glimpse::Mode::Variational)
                    reward = glimpse::variational_reward(
                        st.critic, memory_now, st.prev_memory, st.prev_action, sel.loc);
                a2c->record_reward(reward);
            }
            if (rc.mode == glimpse::Mode::Variational)
                q_steps.push_back({memory_now, st.prev_memory, st.prev_action, sel.loc});

            st.ep_entropy += sel.entropy;
            st.ep_reward += surprise;
            ++st.ep_steps;
            if (rc.mode == glimpse::Mode::Variational) st.prev_memory = memory_now;
            st.prev_action = static_cast<int>(rec.action);

            graph.observe(obs, mask);
            graph.advance(static_cast<int>(rec.action));
        }

        auto [loss, bd] = graph.finish();
        tape.backward(loss);
        st.dmm_opt.step(st.model.params(), grads_of(tape, tp));
        st.carried = graph.detached_memory();

        if (trains_policy) {
            const Real bootstrap = st.policy.value_infer(st.carried.features);
            a2c->finish_update(st.glimpse_opt, bootstrap);
        }
        if (rc.mode == glimpse::Mode::Variational)
            glimpse::q_update(st.critic, st.q_opt, q_steps);

        loss_log.add_row({std::to_string(st.iteration), csvio::fmt_real(bd.write_loss),
                          csvio::fmt_real(bd.step_loss), csvio::fmt_real(bd.mem_reg),
                          csvio::fmt_real(bd.step_reg), csvio::fmt_real(bd.total)});

        st.step_off += T;
        ++st.iteration;

        if (st.iteration % stage_every == 0 || st.iteration == rc.windows) {
            const int stage = st.iteration / stage_every;
            run_stage_eval(stage);
            save_pretrain_checkpoint(rc.out_dir + "/" + stage_name(stage), rc, st, ds);
            save_pretrain_checkpoint(final_path, rc, st, ds);
            save_logs();
            manifest.add_output(stage_name(stage));
        }
    }
    save_pretrain_checkpoint(final_path, rc, st, ds);
    save_logs();
    manifest.add_output("checkpoint_final.bin");
    manifest.add_output("dmm_loss.csv");
    manifest.add_output("glimpse_log.csv");
    manifest.add_output("stage_eval.csv");
    manifest.set_note("checkpoint_hash",
                      std::to_string(content_hash(st.model.params())));
    manifest.set_note("seeds", {{"train_base", ds.seed_base},
                                {"train_episodes", ds.episodes.size()},
                                {"eval_base", rc.eval_seed},
                                {"eval_episodes", rc.eval_episodes}});
}

// --- checkpoint loading and reconstruction evaluation --------------------------

LoadedModels load_pretrained(const RunConfig& rc, const std::string& checkpoint_path) {
    if (!fs::exists(checkpoint_path))
        throw IoError("missing checkpoint file: " + checkpoint_path);
    Checkpoint ck = load_checkpoint(checkpoint_path);
    const auto meta_env = env::env_config_from_json(ck.meta.at("env"));
    if (meta_env.rows != rc.env.rows || meta_env.cols != rc.env.cols ||
        meta_env.window != rc.env.window)
        throw ConfigError("checkpoint was trained on a different environment setup");
    if (ck.meta.at("mem_channels").get<int>() != rc.dmm_cfg.mem_channels ||
        ck.meta.at("mem_stride").get<int>() != rc.dmm_cfg.mem_stride ||
        ck.meta.at("hidden").get<int>() != rc.dmm_cfg.hidden)
        throw ConfigError("checkpoint was trained with a different memory geometry");

    LoadedModels lm{dmm::DmmModel(rc.dmm_cfg), glimpse::GlimpsePolicy(rc.glimpse_cfg),
                    glimpse::mode_from_string(ck.meta.at("mode").get<std::string>()),
                    ck.meta};
    ParamMap dmm_p, gl_p;
    split_prefix(ck.arrays, "dmm.", dmm_p);
    split_prefix(ck.arrays, "glimpse.", gl_p);
    lm.model.params() = dmm_p;
    if (!gl_p.empty()) {
        lm.policy.params() = gl_p;
    } else {
        // follow/random checkpoints carry no learned policy
        rng::Engine g = rng::stream(0, 0);
        lm.policy.init_params(g);
    }
    return lm;
}

ReconRow evaluate_reconstruction(const RunConfig& rc, const std::string& checkpoint_path) {
    LoadedModels lm = load_pretrained(rc, checkpoint_path);
    // seed discipline: the dataset seed range must not touch the eval range
    const uint64_t train_base = lm.meta.at("dataset_seed_base").get<uint64_t>();
    const uint64_t train_n = lm.meta.at("dataset_episodes").get<uint64_t>();
    const uint64_t eval_lo = rc.eval_seed;
    const uint64_t eval_hi =
        rc.eval_seed + static_cast<uint64_t>(rc.eval_episodes) * 256 + 256;
    if (train_base < eval_hi && train_base + train_n > eval_lo)
        throw ConfigError("evaluation seeds overlap the training dataset seeds");

    EvalStats s = evaluate_model(rc, lm.model, lm.policy, lm.mode, rc.eval_seed,
                                 rc.eval_episodes, rc.bptt);
    ReconRow row;
    row.preset = rc.preset;
    row.mode = glimpse::mode_to_string(lm.mode);
    row.error = s.recon_error;
    row.episodes = s.episodes;
    row.horizon = s.horizon;

    Manifest manifest(rc.out_dir, "eval-recon", rc.raw);
    csvio::MetricLog log({"preset", "mode", "recon_error", "episodes", "horizon"});
    log.add_row({row.preset, row.mode, csvio::fmt_real(row.error),
                 std::to_string(row.episodes), std::to_string(row.horizon)});
    log.save(rc.out_dir + "/recon_eval.csv");
    manifest.add_output("recon_eval.csv");
    return row;
}

// --- reinforcement learning phase ----------------------------------------------

namespace {

struct EnvSlot {
    env::FullState state;
    dmm::MemoryMap memory;  // pre-write
    rng::Engine env_rng;
    rng::Engine glimpse_rng;
    int64_t state_id = 0;
    GlimpseGate gate;

    bool has_pending = false;
    glimpse::Selection sel;
    env::Observation obs;
    env::AttentionMask mask;
    dmm::MemoryMap written;
    Real surprise = 0;

    // online-mode window buffers
    dmm::MemoryMap window_start;
    std::vector<dmm::TrajectoryStep> window_steps;
    std::vector<glimpse::A2cStep> window_a2c;
};

struct RlContext {
    const RunConfig& rc;
    dmm::DmmModel& model;
    glimpse::GlimpsePolicy& policy;
    bool full_mode;
};

void slot_reset(const RlContext& ctx, EnvSlot& s) {
    s.state = env::reset(ctx.rc.env, s.env_rng);
    s.memory = ctx.model.empty_map();
    s.has_pending = false;
    s.window_start = s.memory;
    s.window_steps.clear();
    s.window_a2c.clear();
}

// One observation per environment state: the glimpse, crop and masked
// write happen here exactly once, then stay cached until the state changes.
void ensure_pending(const RlContext& ctx, EnvSlot& s, bool need_surprise) {
    if (ctx.full_mode || s.has_pending) return;
    s.gate.check(s.state_id);
    std::optional<std::pair<int, int>> agent_pos;
    if (ctx.rc.mode == glimpse::Mode::Follow)
        agent_pos = std::make_pair(s.state.agent_r, s.state.agent_c);
    s.sel = glimpse::select_location(ctx.policy, ctx.rc.mode, s.memory, agent_pos,
                                     s.glimpse_rng);
    auto [obs, mask] = env::extract_observation(ctx.rc.env, s.state, s.sel.loc);
    if (need_surprise) {
        const Array recon = ctx.model.reconstruct_infer(s.memory);
        s.surprise = glimpse::surprise_reward(obs, recon, mask);
    }
    s.obs = std::move(obs);
    s.mask = std::move(mask);
    s.written = ctx.model.write_infer(s.memory, s.obs, s.mask);
    s.has_pending = true;
}

}  // namespace

void train_rl(const RunConfig& rc, const std::string& pretrain_checkpoint) {
    const bool full_mode = rc.full_mode;
    if (rc.online && full_mode)
        throw ConfigError("online training applies to memory-based modes only");
    if (rc.online && rc.mode != glimpse::Mode::Surprise)
        throw ConfigError("online joint training uses the surprise glimpse mode");

    dmm::DmmModel model(rc.dmm_cfg);
    glimpse::GlimpsePolicy policy(rc.glimpse_cfg);
    glimpse::Mode mode = rc.mode;
    rng::Engine init_rng = rng::stream(rc.seed, 0x2f1);
    uint64_t frozen_dmm_hash = 0, frozen_glimpse_hash = 0;

    if (full_mode) {
        model.init_params(init_rng);
        policy.init_params(init_rng);
    } else if (rc.online) {
        model.init_params(init_rng);
        policy.init_params(init_rng);
    } else {
        LoadedModels lm = load_pretrained(rc, pretrain_checkpoint);
        model.params() = lm.model.params();
        policy.params() = lm.policy.params();
        mode = lm.mode;
        frozen_dmm_hash = content_hash(model.params());
        frozen_glimpse_hash = content_hash(policy.params());
    }

    task::TaskConfig tc;
    tc.in_channels = full_mode ? env::kChannels : rc.dmm_cfg.mem_channels;
    tc.in_rows = full_mode ? rc.env.rows : rc.dmm_cfg.mem_rows();
    tc.in_cols = full_mode ? rc.env.cols : rc.dmm_cfg.mem_cols();
    tc.stride = full_mode ? rc.dmm_cfg.mem_stride : 1;
    tc.hidden = rc.rl_task_hidden;
    tc.clip = static_cast<Real>(rc.raw.get_float("rl.clip"));
    tc.discount = static_cast<Real>(rc.raw.get_float("rl.gamma"));
    tc.gae_lambda = static_cast<Real>(rc.raw.get_float("rl.lambda"));
    tc.entropy_weight = static_cast<Real>(rc.raw.get_float("rl.entropy"));
    tc.value_coef = static_cast<Real>(rc.raw.get_float("rl.value_coef"));
    tc.epochs = static_cast<int>(rc.raw.get_int("rl.epochs"));
    tc.minibatch = static_cast<int>(rc.raw.get_int("rl.minibatch"));
    task::TaskPolicy task_policy(tc);
    task_policy.init_params(init_rng);
    Adam task_opt(rc.rl_lr);
    Adam dmm_opt(rc.dmm_lr), glimpse_opt(rc.glimpse_lr);  // online mode only
    rng::Engine shuffle_rng = rng::stream(rc.seed, 0x5f);

    RlContext ctx{rc, model, policy, full_mode};
    std::vector<EnvSlot> slots(static_cast<size_t>(rc.rl_envs));
    for (int e = 0; e < rc.rl_envs; ++e) {
        slots[static_cast<size_t>(e)].env_rng =
            rng::stream(rc.seed, 0x7000 + static_cast<uint64_t>(e));
        slots[static_cast<size_t>(e)].glimpse_rng =
            rng::stream(rc.seed, 0x8000 + static_cast<uint64_t>(e));
        slot_reset(ctx, slots[static_cast<size_t>(e)]);
    }

    Manifest manifest(rc.out_dir, rc.online ? "train-rl-online" : "train-rl", rc.raw);
    csvio::MetricLog curve({"update", "mean_reward", "mode"});
    const std::string mode_label =
        full_mode ? "full" : (rc.online ? "online" : glimpse::mode_to_string(mode));

    const int steps_per_env = rc.rl_rollout / rc.rl_envs;

    auto flush_online_window = [&](EnvSlot& s) {
        if (!rc.online || s.window_steps.size() < 2) {
            s.window_steps.clear();
            s.window_a2c.clear();
            s.window_start = s.memory;
            return;
        }
        Tape t;
        TapedParams tp = lift(t, model.params());
        dmm::RolloutGraph g(model, t, tp, s.window_start);
        for (const auto& ws : s.window_steps) {
            g.observe(ws.obs, ws.mask);
            g.advance(ws.action);
        }
        auto [loss, bd] = g.finish();
        (void)bd;
        t.backward(loss);
        dmm_opt.step(model.params(), grads_of(t, tp));
        const Real bootstrap = policy.value_infer(s.memory.features);
        glimpse::a2c_update(policy, glimpse_opt, s.window_a2c, bootstrap);
        s.window_steps.clear();
        s.window_a2c.clear();
        s.window_start = s.memory;
    };

    auto eval_policy = [&](int update) {
        double total = 0;
        for (int j = 0; j < rc.rl_eval_episodes; ++j) {
            rng::Engine egen(rc.rl_eval_seed + static_cast<uint64_t>(j));
            env::FullState st = env::reset(rc.env, egen);
            dmm::MemoryMap mem = model.empty_map();
            rng::Engine grng = rng::stream(rc.rl_eval_seed,
                                           0xe000 + static_cast<uint64_t>(j));
            while (!st.terminal) {
                task::ActionSample as;
                if (full_mode) {
                    as = task::task_action_fullstate_argmax(task_policy, st.grid);
                } else {
                    std::optional<std::pair<int, int>> agent_pos;
                    if (mode == glimpse::Mode::Follow)
                        agent_pos = std::make_pair(st.agent_r, st.agent_c);
                    glimpse::Selection sel =
                        glimpse::select_location(policy, mode, mem, agent_pos, grng);
                    auto [obs, mask] = env::extract_observation(rc.env, st, sel.loc);
                    dmm::MemoryMap written = model.write_infer(mem, obs, mask);
                    as = task::task_action_argmax(task_policy, written);
                    mem = model.step_infer(written, mem, as.action);
                    mem.phase = dmm::Phase::PreWrite;
                }
                total += env::env_step(rc.env, st, static_cast<env::Action>(as.action)).reward;
            }
            (void)update;
        }
        return total / rc.rl_eval_episodes;
    };

    for (int update = 0; update < rc.rl_updates; ++update) {
        // collect one rollout across all environments
        std::vector<std::vector<task::PpoSample>> traj(slots.size());
        std::vector<std::vector<Real>> rewards(slots.size()), values(slots.size());
        std::vector<std::vector<uint8_t>> dones(slots.size());

        for (int step = 0; step < steps_per_env; ++step) {
            for (size_t e = 0; e < slots.size(); ++e) {
                EnvSlot& s = slots[e];
                ensure_pending(ctx, s, rc.online);
                task::ActionSample as;
                Array input;
                if (full_mode) {
                    input = s.state.grid;
                    as = task::task_action_fullstate(task_policy, input, s.glimpse_rng);
                } else {
                    input = s.written.features;
                    as = task::task_action(task_policy, s.written, s.glimpse_rng);
                }
                const dmm::MemoryMap pre = s.memory;
                const env::StepOutcome out =
                    env::env_step(rc.env, s.state, static_cast<env::Action>(as.action));

                task::PpoSample ps;
                ps.input = std::move(input);
                ps.action = as.action;
                ps.old_log_prob = as.log_prob;
                traj[e].push_back(std::move(ps));
                rewards[e].push_back(out.reward);
                values[e].push_back(as.value);
                dones[e].push_back(out.done ? 1 : 0);

                if (rc.online && !full_mode) {
                    s.window_steps.push_back({s.obs, s.mask, as.action});
                    s.window_a2c.push_back({pre.features, s.sel.loc, s.surprise});
                }
                if (out.done) {
                    if (rc.online) flush_online_window(s);
                    slot_reset(ctx, s);
                    s.state_id += 1;
                } else {
                    if (!full_mode) {
                        s.memory = model.step_infer(s.written, pre, as.action);
                        s.memory.phase = dmm::Phase::PreWrite;
                    }
                    s.has_pending = false;
                    s.state_id += 1;
                    if (rc.online &&
                        s.window_steps.size() >= static_cast<size_t>(rc.bptt))
                        flush_online_window(s);
                }
            }
        }

        // bootstrap, advantages, batch assembly
        std::vector<task::PpoSample> batch;
        for (size_t e = 0; e < slots.size(); ++e) {
            EnvSlot& s = slots[e];
            Real bootstrap = 0;
            if (dones[e].back() == 0) {
                if (full_mode) {
                    bootstrap = task_policy.forward_infer(s.state.grid).second;
                } else {
                    ensure_pending(ctx, s, rc.online);
                    bootstrap = task_policy.forward_infer(s.written.features).second;
                }
            }
            auto adv = task::gae_advantages(rewards[e], values[e], dones[e], bootstrap,
                                            tc.discount, tc.gae_lambda);
            for (size_t i = 0; i < traj[e].size(); ++i) {
                traj[e][i].advantage = adv[i];
                traj[e][i].value_target = adv[i] + values[e][i];
                batch.push_back(std::move(traj[e][i]));
            }
        }
        task::ppo_update(task_policy, task_opt, std::move(batch), shuffle_rng);

        if ((update + 1) % rc.rl_eval_every == 0 || update + 1 == rc.rl_updates) {
            const double mean_reward = eval_policy(update + 1);
            curve.add_row({std::to_string(update + 1), csvio::fmt_real(mean_reward),
                           mode_label});
            curve.save(rc.out_dir + "/reward_curve.csv");
        }
    }

    if (!full_mode && !rc.online) {
        // the frozen phase must not touch the representation
        if (content_hash(model.params()) != frozen_dmm_hash ||
            content_hash(policy.params()) != frozen_glimpse_hash)
            throw ContractError("frozen representation changed during the task phase");
    }

    ParamMap out;
    for (const auto& [k, v] : task_policy.params()) out["task." + k] = v;
    if (rc.online) {
        for (const auto& [k, v] : model.params()) out["dmm." + k] = v;
        for (const auto& [k, v] : policy.params()) out["glimpse." + k] = v;
    }
    nlohmann::json meta;
    meta["mode"] = mode_label;
    meta["preset"] = rc.preset;
    meta["env"] = env::env_config_json(rc.env);
    meta["task"] = {{"in_channels", tc.in_channels},
                    {"in_rows", tc.in_rows},
                    {"in_cols", tc.in_cols},
                    {"stride", tc.stride},
                    {"hidden", tc.hidden}};
    meta["pretrain_checkpoint"] = pretrain_checkpoint;
    save_checkpoint(rc.out_dir + "/task_checkpoint.bin", out, meta);
    manifest.add_output("task_checkpoint.bin");
    manifest.add_output("reward_curve.csv");
    manifest.set_note("seeds", {{"env_stream_base", 0x7000},
                                {"eval_base", rc.rl_eval_seed},
                                {"eval_episodes", rc.rl_eval_episodes}});
    manifest.set_note("task_checkpoint_hash",
                      std::to_string(content_hash(task_policy.params())));
}

double evaluate_task(const RunConfig& rc, const std::string& rl_dir, int episodes) {
    const std::string task_path = rl_dir + "/task_checkpoint.bin";
    if (!fs::exists(task_path)) throw IoError("missing checkpoint file: " + task_path);
    Checkpoint ck = load_checkpoint(task_path);
    const std::string mode_label = ck.meta.at("mode").get<std::string>();
    const bool full_mode = mode_label == "full";

    dmm::DmmModel model(rc.dmm_cfg);
    glimpse::GlimpsePolicy policy(rc.glimpse_cfg);
    glimpse::Mode mode = rc.mode;
    if (!full_mode) {
        if (mode_label == "online") {
            ParamMap dmm_p, gl_p;
            split_prefix(ck.arrays, "dmm.", dmm_p);
            split_prefix(ck.arrays, "glimpse.", gl_p);
            model.params() = dmm_p;
            policy.params() = gl_p;
            mode = glimpse::Mode::Surprise;
        } else {
            LoadedModels lm = load_pretrained(
                rc, ck.meta.at("pretrain_checkpoint").get<std::string>());
            model.params() = lm.model.params();
            policy.params() = lm.policy.params();
            mode = lm.mode;
        }
    }
    task::TaskConfig tc;
    tc.in_channels = ck.meta.at("task").at("in_channels").get<int>();
    tc.in_rows = ck.meta.at("task").at("in_rows").get<int>();
    tc.in_cols = ck.meta.at("task").at("in_cols").get<int>();
    tc.stride = ck.meta.at("task").at("stride").get<int>();
    tc.hidden = ck.meta.at("task").at("hidden").get<int>();
    task::TaskPolicy task_policy(tc);
    ParamMap task_p;
    split_prefix(ck.arrays, "task.", task_p);
    task_policy.params() = task_p;

    double total = 0;
    for (int j = 0; j < episodes; ++j) {
        rng::Engine egen(rc.rl_eval_seed + static_cast<uint64_t>(j));
        env::FullState st = env::reset(rc.env, egen);
        dmm::MemoryMap mem = model.empty_map();
        rng::Engine grng = rng::stream(rc.rl_eval_seed, 0xe000 + static_cast<uint64_t>(j));
        while (!st.terminal) {
            task::ActionSample as;
            if (full_mode) {
                as = task::task_action_fullstate_argmax(task_policy, st.grid);
            } else {
                std::optional<std::pair<int, int>> agent_pos;
                if (mode == glimpse::Mode::Follow)
                    agent_pos = std::make_pair(st.agent_r, st.agent_c);
                glimpse::Selection sel =
                    glimpse::select_location(policy, mode, mem, agent_pos, grng);
                auto [obs, mask] = env::extract_observation(rc.env, st, sel.loc);
                dmm::MemoryMap written = model.write_infer(mem, obs, mask);
                as = task::task_action_argmax(task_policy, written);
                mem = model.step_infer(written, mem, as.action);
                mem.phase = dmm::Phase::PreWrite;
            }
            total += env::env_step(rc.env, st, static_cast<env::Action>(as.action)).reward;
        }
    }
    return total / episodes;
}

}  // namespace glim::train
