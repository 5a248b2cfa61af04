// High-level command implementations behind the C API / CLI surface.
#pragma once

#include <optional>
#include <string>

#include "morphnas/edge_eval.hpp"
#include "morphnas/search.hpp"

namespace morphnas {

struct SearchRunOptions {
    std::string space = "cls-dilation";
    std::string backbone = "cifar-stack";
    std::string config_path;   // optional key = value file
    std::string out_dir = ".";
    std::optional<unsigned> seed;  // overrides config/env
    int jobs = 1;
};

struct SearchRunSummary {
    double best_score = 0.0;
    double retrained_metric = 0.0;  // val accuracy (cifar-stack) or ODS (edge backbones)
    std::string best_cell_file;
    std::string history_file;
    std::string report_file;
};

SearchRunSummary run_search_command(const SearchRunOptions& opts);

struct EdgeMetrics {
    double ods = 0.0, ois = 0.0, ap = 0.0, r50 = 0.0;
};

// Evaluates a directory of prediction PGMs against ground-truth PGMs. For a
// prediction <id>.pgm the annotations are <id>.pgm or <id>.<k>.pgm in gt_dir;
// a prediction without any annotation is an error naming the missing file.
EdgeMetrics run_edge_eval_dirs(const std::string& pred_dir, const std::string& gt_dir, bool nms,
                               const std::string& csv_path);

// Runs a model checkpoint (or the "baseline-grad" classical predictor) over a
// named dataset and evaluates it.
struct EdgeRunOptions {
    std::string model = "baseline-grad";  // checkpoint dir or "baseline-grad"
    std::string dataset = "synth-shapes-edge";
    int count = 12;
    int size = 64;
    unsigned seed = 7;
    bool nms = false;
    std::string out_dir;  // optional probability-map dump
    std::string csv_path;
};

EdgeMetrics run_edge_run(const EdgeRunOptions& opts);

}  // namespace morphnas
