#include "glim/cli.hpp"

#include <CLI11.hpp>

#include "glim/report.hpp"
#include "glim/trainer.hpp"

namespace glim::cli {

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

void attach_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "configuration file");
    cmd->add_option("overrides", args.overrides, "key=value configuration overrides");
}

cfg::Config build_config(const CommonArgs& args) {
    cfg::Config c = cfg::Config::defaults();
    if (!args.config_path.empty()) c.load_file(args.config_path);
    for (const auto& kv : args.overrides) c.apply_override(kv);
    return c;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"glimpse-controlled spatial memory agents"};
    app.require_subcommand(1);

    CommonArgs collect_args, pretrain_args, rl_args, recon_args, evalrl_args, render_args;
    std::string dataset_path, checkpoint_path, run_dir, report_out;
    std::vector<std::string> report_runs;
    int eval_episodes = 5, render_steps = 10;

    CLI::App* collect = app.add_subcommand("collect", "record an offline dataset");
    attach_common(collect, collect_args);
    collect->add_option("--dataset", dataset_path, "output dataset path");

    CLI::App* pretrain = app.add_subcommand("pretrain", "train memory + glimpse policy");
    attach_common(pretrain, pretrain_args);
    pretrain->add_option("--dataset", dataset_path, "input dataset path")->required();

    CLI::App* trainrl = app.add_subcommand("train-rl", "train the task policy");
    attach_common(trainrl, rl_args);
    trainrl->add_option("--checkpoint", checkpoint_path,
                        "pretraining checkpoint (frozen modes)");

    CLI::App* evalrecon = app.add_subcommand("eval-recon", "reconstruction error table row");
    attach_common(evalrecon, recon_args);
    evalrecon->add_option("--checkpoint", checkpoint_path, "pretraining checkpoint")
        ->required();

    CLI::App* evalrl = app.add_subcommand("eval-rl", "evaluate a trained task policy");
    attach_common(evalrl, evalrl_args);
    evalrl->add_option("--run", run_dir, "train-rl output directory")->required();
    evalrl->add_option("--episodes", eval_episodes, "number of evaluation episodes");

    CLI::App* report = app.add_subcommand("report", "tables and plots from run outputs");
    report->add_option("--out", report_out, "report output directory")->required();
    report->add_option("runs", report_runs, "run directories to aggregate")->required();

    CLI::App* render = app.add_subcommand("render", "frame strips from a pretrained run");
    attach_common(render, render_args);
    render->add_option("--run", run_dir, "pretrain output directory")->required();
    render->add_option("--steps", render_steps, "number of frames");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (collect->parsed()) {
            train::RunConfig rc = train::resolve(build_config(collect_args));
            const std::string path =
                dataset_path.empty() ? rc.out_dir + "/dataset.bin" : dataset_path;
            train::collect_offline(rc, path);
            std::printf("dataset written to %s\n", path.c_str());
            return 0;
        }
        if (pretrain->parsed()) {
            train::RunConfig rc = train::resolve(build_config(pretrain_args));
            train::pretrain(rc, dataset_path);
            std::printf("pretraining outputs in %s\n", rc.out_dir.c_str());
            return 0;
        }
        if (trainrl->parsed()) {
            train::RunConfig rc = train::resolve(build_config(rl_args));
            if (!rc.full_mode && !rc.online && checkpoint_path.empty())
                throw ConfigError("frozen training needs --checkpoint");
            train::train_rl(rc, checkpoint_path);
            std::printf("task training outputs in %s\n", rc.out_dir.c_str());
            return 0;
        }
        if (evalrecon->parsed()) {
            train::RunConfig rc = train::resolve(build_config(recon_args));
            train::ReconRow row = train::evaluate_reconstruction(rc, checkpoint_path);
            std::printf("%s %s recon_error=%.8f (%d episodes x %d steps)\n",
                        row.preset.c_str(), row.mode.c_str(), row.error, row.episodes,
                        row.horizon);
            return 0;
        }
        if (evalrl->parsed()) {
            train::RunConfig rc = train::resolve(build_config(evalrl_args));
            const double mean = train::evaluate_task(rc, run_dir, eval_episodes);
            std::printf("mean evaluation reward over %d episodes: %.6f\n", eval_episodes,
                        mean);
            return 0;
        }
        if (report->parsed()) return report::run_report(report_out, report_runs);
        if (render->parsed()) {
            train::RunConfig rc = train::resolve(build_config(render_args));
            report::render_frame_strip(rc, run_dir, render_steps, rc.out_dir + "/frames");
            std::printf("frames in %s\n", (rc.out_dir + "/frames").c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

}  // namespace glim::cli
