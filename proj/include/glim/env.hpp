#pragma once

#include <string>
#include <utility>
#include <vector>

#include "glim/array.hpp"
#include "glim/image.hpp"
#include "glim/rng.hpp"

namespace glim::env {

// One-hot object channels of the state grid.
inline constexpr int kChanAgent = 0;
inline constexpr int kChanWall = 1;
inline constexpr int kChanEnemy = 2;
inline constexpr int kChanGoal = 3;
inline constexpr int kChannels = 4;

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3 };
inline constexpr int kActions = 4;

struct EnvConfig {
    int rows = 12, cols = 12;
    int window = 5;                // observation window side
    int enemy_count = 2;
    int wall_layout = 0;           // 0: border only, 1: border + interior segments
    int episode_cap = 64;
    Real goal_reward = Real(1);
    Real death_reward = Real(-1);
    Real step_reward = Real(-0.01);
    uint64_t seed = 0;

    void validate() const;
};

EnvConfig preset_small();
EnvConfig preset_large();
EnvConfig preset_by_name(const std::string& name);

struct Enemy {
    int r = 0, c = 0;
    int dr = 0, dc = 0;  // axis-aligned unit velocity
};

// Ground-truth environment state. Object lists are authoritative; the
// one-hot grid is rebuilt from them after every transition and is the only
// view agents may ever receive (through windowed observations).
struct FullState {
    Array grid;  // [kChannels, rows, cols]
    int agent_r = 0, agent_c = 0;
    int goal_r = 0, goal_c = 0;
    std::vector<Enemy> enemies;
    int tick = 0;
    bool terminal = false;
};

struct StepOutcome {
    Real reward = 0;
    bool done = false;
};

struct GlimpseLocation {
    int row = 0, col = 0;
};

struct Observation {
    Array crop;  // [kChannels, window, window]
    int origin_r = 0, origin_c = 0;
};

struct AttentionMask {
    Array mask;  // [1, rows, cols] of {0,1}
    int origin_r = 0, origin_c = 0;
    int window = 0;
};

// Places agent, goal and enemies on distinct non-wall cells; enemies get
// random cardinal unit velocities. Deterministic in the rng state.
FullState reset(const EnvConfig& cfg, rng::Engine& gen);

// Agent moves one cell unless a wall blocks it. Each enemy advances by its
// velocity; an enemy that would enter a wall reverses velocity and moves in
// the new direction within the same tick. Reaching the goal ends the
// episode with goal_reward; sharing a cell with an enemy ends it with
// death_reward; otherwise step_reward, with a forced end at episode_cap.
StepOutcome env_step(const EnvConfig& cfg, FullState& s, Action a);

// The location is the desired window center; the window is clamped to lie
// fully inside the grid, so every location is valid.
std::pair<Observation, AttentionMask> extract_observation(const EnvConfig& cfg,
                                                          const FullState& s,
                                                          GlimpseLocation l);

// Flat fills, one color per object channel, cellpx pixels per cell.
Image render_state(const FullState& s, int cellpx = 12);
// Continuous-valued reconstruction drawn with the same palette.
Image render_reconstruction(const Array& recon, int cellpx = 12);

Rgb channel_color(int channel);
Rgb background_color();

}  // namespace glim::env
