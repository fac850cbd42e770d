#include "glim/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "glim/checkpoint.hpp"
#include "glim/image.hpp"

namespace glim::report {

namespace fs = std::filesystem;

void emit_comparison_table(const std::vector<TableRow>& rows, const std::string& csv_path,
                           const std::string& txt_path) {
    if (rows.empty()) throw ContractError("comparison table needs at least one row");
    std::vector<std::string> presets, modes;
    for (const auto& r : rows) {
        if (std::find(presets.begin(), presets.end(), r.preset) == presets.end())
            presets.push_back(r.preset);
        if (std::find(modes.begin(), modes.end(), r.mode) == modes.end())
            modes.push_back(r.mode);
    }
    std::map<std::pair<std::string, std::string>, double> cell;
    for (const auto& r : rows) cell[{r.preset, r.mode}] = r.error;

    csvio::Table t;
    t.header.push_back("preset");
    for (const auto& m : modes) t.header.push_back(m);
    for (const auto& p : presets) {
        std::vector<std::string> row{p};
        for (const auto& m : modes) {
            auto it = cell.find({p, m});
            row.push_back(it == cell.end() ? "" : csvio::fmt_real(it->second));
        }
        t.rows.push_back(std::move(row));
    }
    csvio::write_csv(csv_path, t);

    const std::string tmp = txt_path + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw IoError("cannot write " + tmp);
        f << "reconstruction error (lower is better; * marks the best per row)\n\n";
        char buf[64];
        f << "preset        ";
        for (const auto& m : modes) {
            std::snprintf(buf, sizeof(buf), "%-14s", m.c_str());
            f << buf;
        }
        f << "\n";
        for (const auto& p : presets) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& m : modes) {
                auto it = cell.find({p, m});
                if (it != cell.end()) best = std::min(best, it->second);
            }
            std::snprintf(buf, sizeof(buf), "%-14s", p.c_str());
            f << buf;
            for (const auto& m : modes) {
                auto it = cell.find({p, m});
                if (it == cell.end()) {
                    std::snprintf(buf, sizeof(buf), "%-14s", "-");
                } else {
                    const bool flag = it->second <= best + 1e-12;
                    std::snprintf(buf, sizeof(buf), "%-.6g%s", it->second,
                                  flag ? "*" : "");
                    std::string cellstr = buf;
                    cellstr.resize(14, ' ');
                    std::snprintf(buf, sizeof(buf), "%s", cellstr.c_str());
                }
                f << buf;
            }
            f << "\n";
        }
    }
    fs::rename(tmp, txt_path);
}

namespace {

Rgb mode_color(const std::string& mode) {
    if (mode == "surprise") return {215, 60, 40};
    if (mode == "random") return {60, 120, 216};
    if (mode == "follow") return {90, 170, 70};
    if (mode == "environment") return {230, 160, 30};
    if (mode == "variational") return {150, 80, 200};
    if (mode == "full") return {40, 40, 40};
    if (mode == "online") return {130, 130, 130};
    return {0, 0, 0};
}

struct RunInfo {
    std::string dir;
    std::string command;
    std::string mode;
    std::string preset;
    int64_t seed = 0;
};

std::optional<RunInfo> inspect_run(const std::string& dir) {
    const std::string mpath = dir + "/manifest.json";
    if (!fs::exists(mpath)) return std::nullopt;
    std::ifstream f(mpath);
    nlohmann::json m = nlohmann::json::parse(f, nullptr, false);
    if (m.is_discarded()) return std::nullopt;
    RunInfo info;
    info.dir = dir;
    info.command = m.value("command", "");
    const auto& c = m.at("config");
    info.mode = c.value("mode", "");
    info.preset = c.value("preset", "");
    info.seed = c.value("seed", int64_t{0});
    return info;
}

std::string label_of(const RunInfo& r) {
    return r.mode + "-s" + std::to_string(r.seed);
}

}  // namespace

int run_report(const std::string& out_dir, const std::vector<std::string>& run_dirs) {
    fs::create_directories(out_dir);
    cfg::Config defaults = cfg::Config::defaults();
    train::Manifest manifest(out_dir, "report", defaults);

    std::vector<TableRow> table_rows;
    std::vector<ChartSeries> recon_curves, glimpse_curves, reward_curves;

    for (const auto& dir : run_dirs) {
        auto info = inspect_run(dir);
        if (!info) throw IoError("not a run directory (no manifest): " + dir);
        if (fs::exists(dir + "/recon_eval.csv")) {
            csvio::Table t = csvio::read_csv(dir + "/recon_eval.csv");
            for (const auto& row : t.rows)
                table_rows.push_back({row[0], row[1], csvio::parse_real(row[2])});
        }
        if (fs::exists(dir + "/stage_eval.csv")) {
            csvio::Table t = csvio::read_csv(dir + "/stage_eval.csv");
            ChartSeries recon{label_of(*info), mode_color(info->mode), {}, {}};
            ChartSeries glim{label_of(*info), mode_color(info->mode), {}, {}};
            for (const auto& row : t.rows) {
                recon.xs.push_back(csvio::parse_real(row[1]));
                recon.ys.push_back(csvio::parse_real(row[2]));
                glim.xs.push_back(csvio::parse_real(row[1]));
                glim.ys.push_back(csvio::parse_real(row[3]));
            }
            recon_curves.push_back(std::move(recon));
            glimpse_curves.push_back(std::move(glim));

            // per-object curriculum series for this run
            std::vector<ChartSeries> cur;
            const char* objs[4] = {"agent", "wall", "enemy", "goal"};
            const Rgb obj_colors[4] = {
                {66, 135, 245}, {128, 128, 128}, {120, 210, 255}, {235, 64, 52}};
            for (int k = 0; k < 4; ++k) {
                ChartSeries err{std::string("err_") + objs[k], obj_colors[k], {}, {}};
                ChartSeries cooc{std::string("cooc_") + objs[k], obj_colors[k], {}, {}};
                for (const auto& row : t.rows) {
                    const std::string& e = row[static_cast<size_t>(6 + k)];
                    if (!e.empty()) {
                        err.xs.push_back(csvio::parse_real(row[1]));
                        err.ys.push_back(csvio::parse_real(e));
                    }
                    cooc.xs.push_back(csvio::parse_real(row[1]));
                    cooc.ys.push_back(csvio::parse_real(row[static_cast<size_t>(10 + k)]));
                }
                cur.push_back(std::move(err));
                cur.push_back(std::move(cooc));
            }
            std::vector<ChartSeries> errs(cur.begin(), cur.begin() + 8);
            std::vector<ChartSeries> err_only, cooc_only;
            for (size_t k = 0; k < errs.size(); ++k)
                (k % 2 == 0 ? err_only : cooc_only).push_back(errs[k]);
            const std::string base = "curriculum_" + label_of(*info);
            write_chart(out_dir + "/" + base + "_error.png", err_only);
            write_chart(out_dir + "/" + base + "_cooccurrence.png", cooc_only);
            manifest.add_output(base + "_error.png");
            manifest.add_output(base + "_cooccurrence.png");
        }
        if (fs::exists(dir + "/reward_curve.csv")) {
            csvio::Table t = csvio::read_csv(dir + "/reward_curve.csv");
            const std::string mode = t.rows.empty() ? info->mode : t.rows.front()[2];
            ChartSeries s{mode + "-s" + std::to_string(info->seed), mode_color(mode), {}, {}};
            for (const auto& row : t.rows) {
                s.xs.push_back(csvio::parse_real(row[0]));
                s.ys.push_back(csvio::parse_real(row[1]));
            }
            reward_curves.push_back(std::move(s));
        }
    }

    if (!table_rows.empty()) {
        emit_comparison_table(table_rows, out_dir + "/comparison_table.csv",
                              out_dir + "/comparison_table.txt");
        manifest.add_output("comparison_table.csv");
        manifest.add_output("comparison_table.txt");
    }
    if (!recon_curves.empty()) {
        write_chart(out_dir + "/recon_error_curves.png", recon_curves);
        write_chart(out_dir + "/glimpse_reward_curves.png", glimpse_curves);
        manifest.add_output("recon_error_curves.png");
        manifest.add_output("glimpse_reward_curves.png");
    }
    if (!reward_curves.empty()) {
        write_chart(out_dir + "/reward_curves.png", reward_curves);
        manifest.add_output("reward_curves.png");
    }
    return 0;
}

void render_frame_strip(const train::RunConfig& rc, const std::string& run_dir,
                        int steps, const std::string& out_dir) {
    fs::create_directories(out_dir);
    train::LoadedModels lm = train::load_pretrained(rc, run_dir + "/checkpoint_final.bin");
    train::Manifest manifest(out_dir, "render", rc.raw);

    // one held-out episode, same construction as the evaluation path
    rng::Engine sample_rng = rng::stream(rc.eval_seed, 0xf5a);
    const int horizon = steps;
    int have = 0;
    std::vector<Array> grids;
    std::vector<int> actions;
    std::vector<std::pair<int, int>> agent_positions;
    for (int attempt = 0; attempt < 200 && have < horizon; ++attempt) {
        const uint64_t eseed = rc.eval_seed + static_cast<uint64_t>(attempt);
        rng::Engine gen(eseed);
        env::FullState s = env::reset(rc.env, gen);
        rng::Engine act = rng::stream(eseed, 0xe7a);
        grids.clear();
        actions.clear();
        agent_positions.clear();
        while (!s.terminal && static_cast<int>(grids.size()) < horizon) {
            grids.push_back(s.grid);
            agent_positions.emplace_back(s.agent_r, s.agent_c);
            env::Action a;
            if (rc.collect_policy == "scripted")
                a = train::scripted_goal_seeker(rc.env, s, act);
            else
                a = static_cast<env::Action>(rng::uniform_int(act, 0, 3));
            actions.push_back(static_cast<int>(a));
            env::env_step(rc.env, s, a);
        }
        have = static_cast<int>(grids.size());
        if (have >= 2) break;  // accept a short episode, warn below
    }
    if (have < steps)
        std::fprintf(stderr, "warning: episode has %d steps, truncating strip from %d\n",
                     have, steps);
    const int T = std::min(steps, have);

    dmm::MemoryMap memory = lm.model.empty_map();
    for (int t = 0; t < T; ++t) {
        env::FullState shell;
        shell.grid = grids[static_cast<size_t>(t)];
        const Array recon = lm.model.reconstruct_infer(memory);
        std::optional<std::pair<int, int>> agent_pos;
        if (lm.mode == glimpse::Mode::Follow)
            agent_pos = agent_positions[static_cast<size_t>(t)];
        glimpse::Selection sel =
            glimpse::select_location(lm.policy, lm.mode, memory, agent_pos, sample_rng);
        auto [obs, mask] = env::extract_observation(rc.env, shell, sel.loc);

        // panel 1: state with sampled window outline
        shell.agent_r = agent_positions[static_cast<size_t>(t)].first;
        shell.agent_c = agent_positions[static_cast<size_t>(t)].second;
        Image state_img = env::render_state(shell, rc.cellpx);
        draw_rect_outline(state_img, mask.origin_c * rc.cellpx, mask.origin_r * rc.cellpx,
                          mask.window * rc.cellpx, mask.window * rc.cellpx,
                          {250, 220, 40}, 2);
        // panel 2: location-policy heatmap, max-normalized to [0,1]
        Array probs = lm.policy.probs_grid(memory.features);
        Real mx = 0;
        for (size_t i = 0; i < probs.size(); ++i) mx = std::max(mx, probs[i]);
        Array norm(probs.shape());
        for (size_t i = 0; i < probs.size(); ++i)
            norm[i] = mx > 0 ? probs[i] / mx : Real(0);
        Image heat_img = render_heatmap(norm, rc.cellpx);
        // panel 3: reconstruction
        Image recon_img = env::render_reconstruction(recon, rc.cellpx);

        char name[64];
        std::snprintf(name, sizeof(name), "frame_%03d.png", t);
        write_png(out_dir + "/" + name, hstack({state_img, heat_img, recon_img}));
        manifest.add_output(name);

        // raw float grid export backing the heatmap panel
        std::snprintf(name, sizeof(name), "heatmap_%03d.csv", t);
        csvio::Table grid_csv;
        for (int c = 0; c < rc.env.cols; ++c)
            grid_csv.header.push_back("c" + std::to_string(c));
        for (int r = 0; r < rc.env.rows; ++r) {
            std::vector<std::string> row;
            for (int c = 0; c < rc.env.cols; ++c)
                row.push_back(csvio::fmt_real(probs.at(r * rc.env.cols + c)));
            grid_csv.rows.push_back(std::move(row));
        }
        csvio::write_csv(out_dir + "/" + name, grid_csv);
        manifest.add_output(name);

        dmm::MemoryMap written = lm.model.write_infer(memory, obs, mask);
        memory = lm.model.step_infer(written, memory, actions[static_cast<size_t>(t)]);
        memory.phase = dmm::Phase::PreWrite;
    }
}

}  // namespace glim::report
