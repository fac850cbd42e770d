#pragma once

#include <json.hpp>

#include "glim/env.hpp"

namespace glim::env {

inline constexpr int kDatasetVersion = 1;

// One stored transition: the grid *before* the action, bit-packed one-hot
// channels, plus the action taken, reward received and episode-end flag.
struct StepRecord {
    std::vector<uint8_t> packed;
    uint8_t action = 0;
    float reward = 0;
    bool done = false;
};

struct EpisodeRecord {
    uint64_t seed = 0;
    std::vector<StepRecord> steps;
};

struct Dataset {
    EnvConfig config;
    uint64_t seed_base = 0;
    std::vector<EpisodeRecord> episodes;

    size_t total_steps() const {
        size_t n = 0;
        for (const auto& e : episodes) n += e.steps.size();
        return n;
    }
};

std::vector<uint8_t> pack_grid(const Array& grid);
Array unpack_grid(const EnvConfig& cfg, const std::vector<uint8_t>& packed);

// Agent position read from the one-hot grid (exactly one agent bit).
std::pair<int, int> agent_position(const Array& grid);

// File layout: u64 little-endian header length, JSON header (version,
// config, episode count, step count, seed base), then per episode a u32
// step count and u64 seed followed by fixed-size step records.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

nlohmann::json env_config_json(const EnvConfig& cfg);
EnvConfig env_config_from_json(const nlohmann::json& j);

}  // namespace glim::env
