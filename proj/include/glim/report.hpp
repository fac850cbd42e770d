#pragma once

#include <string>
#include <vector>

#include "glim/trainer.hpp"

namespace glim::report {

struct TableRow {
    std::string preset, mode;
    double error = 0;
};

// Comparison table: one row per preset, one column per mode, the lowest
// error per row flagged with '*' (ties within 1e-12 all flagged). The CSV
// carries the raw values; the .txt carries the flags.
void emit_comparison_table(const std::vector<TableRow>& rows, const std::string& csv_path,
                           const std::string& txt_path);

// Aggregates run directories (pretraining, reconstruction evaluations and
// task-reward curves, recognized via their manifests) into a comparison
// table and metric plots under out_dir. Pure function of the input CSVs.
int run_report(const std::string& out_dir, const std::vector<std::string>& run_dirs);

// Per-timestep triplet images (state with the sampled window outlined,
// location-policy heatmap, reconstruction) for one held-out episode, plus
// the raw heatmap grids as CSV. Truncates with a warning if the episode is
// shorter than `steps`.
void render_frame_strip(const train::RunConfig& rc, const std::string& run_dir,
                        int steps, const std::string& out_dir);

}  // namespace glim::report
