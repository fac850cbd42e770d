#include "glim/config.hpp"

#include <cctype>
#include <fstream>

namespace glim::cfg {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

void Config::define(const std::string& key, Type type, const std::string& raw) {
    Entry e;
    e.type = type;
    entries_[key] = e;
    set(key, raw);
}

Config Config::defaults() {
    Config c;
    // run identity
    c.define("preset", Type::String, "small");
    c.define("mode", Type::String, "surprise");
    c.define("seed", Type::Int, "1");
    c.define("out_dir", Type::String, "runs/run");
    c.define("jobs", Type::Int, "1");

    // environment overrides; -1 means "use the preset value"
    c.define("env.rows", Type::Int, "-1");
    c.define("env.cols", Type::Int, "-1");
    c.define("env.window", Type::Int, "-1");
    c.define("env.enemy_count", Type::Int, "-1");
    c.define("env.wall_layout", Type::Int, "-1");
    c.define("env.episode_cap", Type::Int, "-1");
    c.define("env.goal_reward", Type::Float, "1.0");
    c.define("env.death_reward", Type::Float, "-1.0");
    c.define("env.step_reward", Type::Float, "-0.01");

    // memory model
    c.define("model.mem_channels", Type::Int, "8");
    c.define("model.hidden", Type::Int, "8");
    c.define("model.mem_stride", Type::Int, "0");  // 0: preset default (small 1, large 2)
    c.define("model.step_base", Type::String, "postwrite");  // or "prewrite"
    c.define("model.alpha", Type::Float, "0.01");
    c.define("model.beta", Type::Float, "0.01");

    // offline data collection
    c.define("collect.steps", Type::Int, "0");  // 0: preset default
    c.define("collect.policy", Type::String, "auto");  // auto|random|scripted

    // representation pretraining
    c.define("pretrain.windows", Type::Int, "20000");
    c.define("pretrain.bptt", Type::Int, "25");
    c.define("pretrain.lr", Type::Float, "1e-3");
    c.define("pretrain.glimpse_lr", Type::Float, "5e-4");
    c.define("pretrain.glimpse_hidden", Type::Int, "8");
    c.define("pretrain.discount", Type::Float, "0.9");
    c.define("pretrain.entropy", Type::Float, "0.001");
    c.define("pretrain.value_coef", Type::Float, "0.5");
    c.define("pretrain.stages", Type::Int, "20");
    c.define("pretrain.eval_episodes", Type::Int, "6");
    c.define("pretrain.eval_seed", Type::Int, "900000000");
    c.define("pretrain.resume", Type::Bool, "false");

    // reinforcement learning phase
    c.define("rl.updates", Type::Int, "300");
    c.define("rl.rollout", Type::Int, "512");
    c.define("rl.envs", Type::Int, "8");
    c.define("rl.minibatch", Type::Int, "64");
    c.define("rl.epochs", Type::Int, "4");
    c.define("rl.clip", Type::Float, "0.2");
    c.define("rl.gamma", Type::Float, "0.99");
    c.define("rl.lambda", Type::Float, "0.95");
    c.define("rl.entropy", Type::Float, "0.01");
    c.define("rl.value_coef", Type::Float, "0.5");
    c.define("rl.lr", Type::Float, "3e-4");
    c.define("rl.task_hidden", Type::Int, "8");
    c.define("rl.eval_every", Type::Int, "10");
    c.define("rl.eval_episodes", Type::Int, "5");
    c.define("rl.eval_seed", Type::Int, "910000000");
    c.define("rl.online", Type::Bool, "false");

    // rendering
    c.define("render.cellpx", Type::Int, "12");
    return c;
}

void Config::set(const std::string& key, const std::string& raw_value) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    Entry& e = it->second;
    const std::string v = trim(raw_value);
    try {
        switch (e.type) {
            case Type::Int: {
                size_t pos = 0;
                e.i = std::stoll(v, &pos);
                if (pos != v.size()) throw std::invalid_argument(v);
                break;
            }
            case Type::Float: {
                size_t pos = 0;
                e.f = std::stod(v, &pos);
                if (pos != v.size()) throw std::invalid_argument(v);
                break;
            }
            case Type::Bool: {
                if (v == "true")
                    e.b = true;
                else if (v == "false")
                    e.b = false;
                else
                    throw std::invalid_argument(v);
                break;
            }
            case Type::String: {
                if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
                    e.s = v.substr(1, v.size() - 2);
                else
                    e.s = v;
                break;
            }
        }
    } catch (const std::exception&) {
        throw ConfigError("invalid value '" + v + "' for config key '" + key + "'");
    }
}

void Config::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        set(key, trim(line.substr(eq + 1)));
    }
}

void Config::apply_override(const std::string& key_value) {
    const size_t eq = key_value.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like key=value, got '" + key_value + "'");
    set(trim(key_value.substr(0, eq)), trim(key_value.substr(eq + 1)));
}

const Config::Entry& Config::lookup(const std::string& key, Type want) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    if (it->second.type != want)
        throw ConfigError("config key '" + key + "' accessed with the wrong type");
    return it->second;
}

int64_t Config::get_int(const std::string& key) const { return lookup(key, Type::Int).i; }
double Config::get_float(const std::string& key) const { return lookup(key, Type::Float).f; }
bool Config::get_bool(const std::string& key) const { return lookup(key, Type::Bool).b; }
const std::string& Config::get_string(const std::string& key) const {
    return lookup(key, Type::String).s;
}

nlohmann::json Config::to_json() const {
    nlohmann::json j;
    for (const auto& [key, e] : entries_) {
        switch (e.type) {
            case Type::Int: j[key] = e.i; break;
            case Type::Float: j[key] = e.f; break;
            case Type::Bool: j[key] = e.b; break;
            case Type::String: j[key] = e.s; break;
        }
    }
    return j;
}

}  // namespace glim::cfg
