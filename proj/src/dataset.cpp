#include "glim/dataset.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace glim::env {

std::vector<uint8_t> pack_grid(const Array& grid) {
    std::vector<uint8_t> out((grid.size() + 7) / 8, 0);
    for (size_t i = 0; i < grid.size(); ++i)
        if (grid[i] != 0) out[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
    return out;
}

Array unpack_grid(const EnvConfig& cfg, const std::vector<uint8_t>& packed) {
    Array grid({kChannels, cfg.rows, cfg.cols});
    if (packed.size() != (grid.size() + 7) / 8)
        throw IoError("packed grid size does not match the configured grid");
    for (size_t i = 0; i < grid.size(); ++i)
        if (packed[i / 8] & (1u << (i % 8))) grid[i] = Real(1);
    return grid;
}

std::pair<int, int> agent_position(const Array& grid) {
    const int rows = grid.dim(1), cols = grid.dim(2);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (grid.at(kChanAgent, r, c) != 0) return {r, c};
    throw ContractError("grid has no agent bit");
}

nlohmann::json env_config_json(const EnvConfig& cfg) {
    return nlohmann::json{{"rows", cfg.rows},
                          {"cols", cfg.cols},
                          {"window", cfg.window},
                          {"enemy_count", cfg.enemy_count},
                          {"wall_layout", cfg.wall_layout},
                          {"episode_cap", cfg.episode_cap},
                          {"goal_reward", cfg.goal_reward},
                          {"death_reward", cfg.death_reward},
                          {"step_reward", cfg.step_reward},
                          {"seed", cfg.seed}};
}

EnvConfig env_config_from_json(const nlohmann::json& j) {
    EnvConfig cfg;
    cfg.rows = j.at("rows").get<int>();
    cfg.cols = j.at("cols").get<int>();
    cfg.window = j.at("window").get<int>();
    cfg.enemy_count = j.at("enemy_count").get<int>();
    cfg.wall_layout = j.at("wall_layout").get<int>();
    cfg.episode_cap = j.at("episode_cap").get<int>();
    cfg.goal_reward = j.at("goal_reward").get<Real>();
    cfg.death_reward = j.at("death_reward").get<Real>();
    cfg.step_reward = j.at("step_reward").get<Real>();
    cfg.seed = j.at("seed").get<uint64_t>();
    return cfg;
}

void save_dataset(const std::string& path, const Dataset& ds) {
    nlohmann::json header;
    header["version"] = kDatasetVersion;
    header["config"] = env_config_json(ds.config);
    header["episode_count"] = ds.episodes.size();
    header["steps_total"] = ds.total_steps();
    header["seed_base"] = ds.seed_base;
    const std::string hs = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot open " + tmp + " for writing");
        uint64_t hlen = hs.size();
        f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
        f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        for (const auto& ep : ds.episodes) {
            const uint32_t n = static_cast<uint32_t>(ep.steps.size());
            f.write(reinterpret_cast<const char*>(&n), sizeof(n));
            f.write(reinterpret_cast<const char*>(&ep.seed), sizeof(ep.seed));
            for (const auto& st : ep.steps) {
                f.write(reinterpret_cast<const char*>(st.packed.data()),
                        static_cast<std::streamsize>(st.packed.size()));
                f.write(reinterpret_cast<const char*>(&st.action), 1);
                f.write(reinterpret_cast<const char*>(&st.reward), sizeof(float));
                const uint8_t d = st.done ? 1 : 0;
                f.write(reinterpret_cast<const char*>(&d), 1);
            }
        }
        if (!f) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open dataset: " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!f || hlen == 0 || hlen > (1ull << 24)) throw IoError("corrupt dataset header: " + path);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw IoError("invalid dataset header JSON: " + path);
    if (header.value("version", -1) != kDatasetVersion)
        throw IoError("unsupported dataset version in " + path);

    Dataset ds;
    ds.config = env_config_from_json(header.at("config"));
    ds.seed_base = header.at("seed_base").get<uint64_t>();
    const size_t episodes = header.at("episode_count").get<size_t>();
    const size_t packed_size =
        (static_cast<size_t>(kChannels) * ds.config.rows * ds.config.cols + 7) / 8;

    for (size_t e = 0; e < episodes; ++e) {
        uint32_t n = 0;
        EpisodeRecord ep;
        f.read(reinterpret_cast<char*>(&n), sizeof(n));
        f.read(reinterpret_cast<char*>(&ep.seed), sizeof(ep.seed));
        if (!f) throw IoError("truncated dataset: " + path);
        ep.steps.resize(n);
        for (auto& st : ep.steps) {
            st.packed.resize(packed_size);
            f.read(reinterpret_cast<char*>(st.packed.data()),
                   static_cast<std::streamsize>(packed_size));
            f.read(reinterpret_cast<char*>(&st.action), 1);
            f.read(reinterpret_cast<char*>(&st.reward), sizeof(float));
            uint8_t d = 0;
            f.read(reinterpret_cast<char*>(&d), 1);
            st.done = d != 0;
            if (!f) throw IoError("truncated dataset: " + path);
        }
        ds.episodes.push_back(std::move(ep));
    }
    return ds;
}

}  // namespace glim::env
