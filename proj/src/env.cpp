#include "glim/env.hpp"

#include <algorithm>

namespace glim::env {

void EnvConfig::validate() const {
    if (rows < 4 || cols < 4) throw ConfigError("grid too small");
    if (window < 1 || window > std::min(rows, cols))
        throw ConfigError("window must satisfy 1 <= w <= min(rows, cols)");
    if (episode_cap < 1) throw ConfigError("episode_cap must be >= 1");
    if (enemy_count < 0) throw ConfigError("enemy_count must be >= 0");
}

EnvConfig preset_small() {
    EnvConfig c;
    c.rows = 12;
    c.cols = 12;
    c.window = 5;
    c.enemy_count = 2;
    c.wall_layout = 0;
    c.episode_cap = 64;
    return c;
}

EnvConfig preset_large() {
    EnvConfig c;
    c.rows = 24;
    c.cols = 24;
    c.window = 6;
    c.enemy_count = 4;
    c.wall_layout = 1;
    c.episode_cap = 128;
    return c;
}

EnvConfig preset_by_name(const std::string& name) {
    if (name == "small") return preset_small();
    if (name == "large") return preset_large();
    throw ConfigError("unknown preset '" + name + "' (expected small or large)");
}

namespace {

bool interior_wall(const EnvConfig& cfg, int r, int c) {
    if (cfg.wall_layout != 1) return false;
    // Two segments with wide gaps; chosen so every free cell stays reachable.
    const int hr = cfg.rows / 3;
    if (r == hr && c >= 3 && c < cfg.cols - 8) return true;
    const int vc = (2 * cfg.cols) / 3;
    if (c == vc && r >= cfg.rows / 2 && r < cfg.rows - 3) return true;
    return false;
}

bool is_wall(const EnvConfig& cfg, int r, int c) {
    if (r == 0 || c == 0 || r == cfg.rows - 1 || c == cfg.cols - 1) return true;
    return interior_wall(cfg, r, c);
}

void rebuild_grid(const EnvConfig& cfg, FullState& s) {
    if (s.grid.empty()) s.grid = Array({kChannels, cfg.rows, cfg.cols});
    s.grid.fill(Real(0));
    for (int r = 0; r < cfg.rows; ++r)
        for (int c = 0; c < cfg.cols; ++c)
            if (is_wall(cfg, r, c)) s.grid.at(kChanWall, r, c) = Real(1);
    s.grid.at(kChanAgent, s.agent_r, s.agent_c) = Real(1);
    s.grid.at(kChanGoal, s.goal_r, s.goal_c) = Real(1);
    for (const Enemy& e : s.enemies) s.grid.at(kChanEnemy, e.r, e.c) = Real(1);
}

constexpr int kDr[kActions] = {-1, 1, 0, 0};
constexpr int kDc[kActions] = {0, 0, -1, 1};

}  // namespace

FullState reset(const EnvConfig& cfg, rng::Engine& gen) {
    cfg.validate();
    std::vector<std::pair<int, int>> free_cells;
    for (int r = 0; r < cfg.rows; ++r)
        for (int c = 0; c < cfg.cols; ++c)
            if (!is_wall(cfg, r, c)) free_cells.emplace_back(r, c);
    if (free_cells.size() < static_cast<size_t>(2 + cfg.enemy_count))
        throw ConfigError("grid too small to place agent, goal and enemies");

    // draw distinct cells
    std::vector<std::pair<int, int>> picks;
    for (int need = 0; need < 2 + cfg.enemy_count; ++need) {
        const auto idx = static_cast<size_t>(
            rng::uniform_int(gen, 0, static_cast<int64_t>(free_cells.size()) - 1));
        picks.push_back(free_cells[idx]);
        free_cells.erase(free_cells.begin() + static_cast<long>(idx));
    }

    FullState s;
    s.agent_r = picks[0].first;
    s.agent_c = picks[0].second;
    s.goal_r = picks[1].first;
    s.goal_c = picks[1].second;
    for (int i = 0; i < cfg.enemy_count; ++i) {
        Enemy e;
        e.r = picks[static_cast<size_t>(2 + i)].first;
        e.c = picks[static_cast<size_t>(2 + i)].second;
        const int dir = static_cast<int>(rng::uniform_int(gen, 0, 3));
        e.dr = kDr[dir];
        e.dc = kDc[dir];
        s.enemies.push_back(e);
    }
    rebuild_grid(cfg, s);
    return s;
}

StepOutcome env_step(const EnvConfig& cfg, FullState& s, Action a) {
    if (s.terminal) throw ContractError("env_step called on a terminal state");
    const int ai = static_cast<int>(a);
    if (ai < 0 || ai >= kActions) throw ContractError("action out of range");

    ++s.tick;

    const int nr = s.agent_r + kDr[ai];
    const int nc = s.agent_c + kDc[ai];
    if (!is_wall(cfg, nr, nc)) {
        s.agent_r = nr;
        s.agent_c = nc;
    }

    StepOutcome out;
    if (s.agent_r == s.goal_r && s.agent_c == s.goal_c) {
        out.reward = cfg.goal_reward;
        out.done = true;
        s.terminal = true;
        rebuild_grid(cfg, s);
        return out;
    }

    // Enemies advance after the agent; an enemy blocked by a wall reverses
    // and moves the same tick (stays put if both directions are blocked).
    // Enemies pass through each other, the goal and the agent.
    for (Enemy& e : s.enemies) {
        int tr = e.r + e.dr, tc = e.c + e.dc;
        if (is_wall(cfg, tr, tc)) {
            e.dr = -e.dr;
            e.dc = -e.dc;
            tr = e.r + e.dr;
            tc = e.c + e.dc;
            if (is_wall(cfg, tr, tc)) {
                tr = e.r;
                tc = e.c;
            }
        }
        e.r = tr;
        e.c = tc;
    }

    bool dead = false;
    for (const Enemy& e : s.enemies)
        if (e.r == s.agent_r && e.c == s.agent_c) dead = true;

    if (dead) {
        out.reward = cfg.death_reward;
        out.done = true;
    } else {
        out.reward = cfg.step_reward;
        out.done = s.tick >= cfg.episode_cap;
    }
    s.terminal = out.done;
    rebuild_grid(cfg, s);
    return out;
}

std::pair<Observation, AttentionMask> extract_observation(const EnvConfig& cfg,
                                                          const FullState& s,
                                                          GlimpseLocation l) {
    if (l.row < 0 || l.row >= cfg.rows || l.col < 0 || l.col >= cfg.cols)
        throw ContractError("glimpse location outside the grid");
    const int w = cfg.window;
    const int or_ = std::clamp(l.row - w / 2, 0, cfg.rows - w);
    const int oc = std::clamp(l.col - w / 2, 0, cfg.cols - w);

    Observation obs;
    obs.origin_r = or_;
    obs.origin_c = oc;
    obs.crop = Array({kChannels, w, w});
    for (int ch = 0; ch < kChannels; ++ch)
        for (int r = 0; r < w; ++r)
            for (int c = 0; c < w; ++c)
                obs.crop.at(ch, r, c) = s.grid.at(ch, or_ + r, oc + c);

    AttentionMask m;
    m.origin_r = or_;
    m.origin_c = oc;
    m.window = w;
    m.mask = Array({1, cfg.rows, cfg.cols});
    for (int r = 0; r < w; ++r)
        for (int c = 0; c < w; ++c) m.mask.at(0, or_ + r, oc + c) = Real(1);
    return {std::move(obs), std::move(m)};
}

Rgb channel_color(int channel) {
    switch (channel) {
        case kChanAgent: return {66, 135, 245};   // blue
        case kChanWall: return {128, 128, 128};   // gray
        case kChanEnemy: return {120, 210, 255};  // light blue
        case kChanGoal: return {235, 64, 52};     // red
        default: throw ContractError("unknown channel");
    }
}

Rgb background_color() { return {24, 24, 24}; }

Image render_state(const FullState& s, int cellpx) {
    const int rows = s.grid.dim(1), cols = s.grid.dim(2);
    Image img(cols * cellpx, rows * cellpx, background_color());
    // later channels draw over earlier ones: wall < goal < enemy < agent
    const int order[kChannels] = {kChanWall, kChanGoal, kChanEnemy, kChanAgent};
    for (int ch : order)
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                if (s.grid.at(ch, r, c) != 0)
                    fill_rect(img, c * cellpx, r * cellpx, cellpx, cellpx,
                              channel_color(ch));
    return img;
}

Image render_reconstruction(const Array& recon, int cellpx) {
    if (recon.ndim() != 3 || recon.dim(0) != kChannels)
        throw ContractError("render_reconstruction expects [4,H,W]");
    const int rows = recon.dim(1), cols = recon.dim(2);
    const Rgb bg = background_color();
    Image img(cols * cellpx, rows * cellpx, bg);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double acc[3] = {static_cast<double>(bg[0]), static_cast<double>(bg[1]),
                             static_cast<double>(bg[2])};
            for (int ch = 0; ch < kChannels; ++ch) {
                const double v = std::clamp(static_cast<double>(recon.at(ch, r, c)), 0.0, 1.0);
                const Rgb col = channel_color(ch);
                for (int k = 0; k < 3; ++k) acc[k] += v * (col[k] - bg[k]);
            }
            Rgb px{static_cast<uint8_t>(std::clamp(acc[0], 0.0, 255.0)),
                   static_cast<uint8_t>(std::clamp(acc[1], 0.0, 255.0)),
                   static_cast<uint8_t>(std::clamp(acc[2], 0.0, 255.0))};
            fill_rect(img, c * cellpx, r * cellpx, cellpx, cellpx, px);
        }
    return img;
}

}  // namespace glim::env
