// morph: command-line front end over the morphnas C API.
#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "morphnas.h"

namespace {

int report_failure(morphnas_status st) {
    std::fprintf(stderr, "error: %s\n", morphnas_last_error());
    return static_cast<int>(st);
}

// --seed flag beats MORPHNAS_SEED, which beats the built-in default.
long resolve_seed(long flag_seed) {
    if (flag_seed >= 0) return flag_seed;
    if (const char* env = std::getenv("MORPHNAS_SEED")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v >= 0) return v;
        std::fprintf(stderr, "warning: ignoring malformed MORPHNAS_SEED '%s'\n", env);
    }
    return -1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"morphnas: grayscale morphology, pseudo-morphological layers, and cell search"};
    app.require_subcommand(1);

    // apply
    std::string op, se_text, in_path, out_path;
    int bits = 8;
    auto* apply = app.add_subcommand("apply", "Apply a classical morphology operator to a PGM image");
    apply->add_option("--op", op, "erode|dilate|open|close|grad-i|grad-e|grad-m")->required();
    apply->add_option("--se", se_text, "structuring element, e.g. disk:3 square:2 cross:1")->required();
    apply->add_option("--in", in_path, "input PGM")->required();
    apply->add_option("--out", out_path, "output PGM")->required();
    apply->add_option("--bits", bits, "output depth (8 or 16)");

    // layer-check
    std::string variant;
    long lc_seed = -1;
    double tol = 1e-4;
    auto* layer_check =
        app.add_subcommand("layer-check", "Run the pseudo-layer oracle and gradient-check suite");
    layer_check->add_option("--variant", variant, "dilation|erosion|pooling|upsampling|gradient")
        ->required();
    layer_check->add_option("--seed", lc_seed, "random seed");
    layer_check->add_option("--tol", tol, "gradient-check relative tolerance");

    // search
    std::string space, backbone, config_path, search_out = "search_out";
    long search_seed = -1;
    int jobs = 1;
    auto* search = app.add_subcommand("search", "Run the cell-based architecture search");
    search->add_option("--space", space, "search space name")->required();
    search->add_option("--backbone", backbone, "cifar-stack|unet-search|multiscale-decoder")
        ->required();
    search->add_option("--config", config_path, "key = value config file");
    search->add_option("--out", search_out, "output directory");
    search->add_option("--seed", search_seed, "random seed");
    search->add_option("--jobs", jobs, "parallel candidate evaluations");

    // edge-eval
    std::string pred_dir, gt_dir, csv_path;
    bool nms = false;
    auto* edge_eval = app.add_subcommand("edge-eval", "Evaluate a directory of edge predictions");
    edge_eval->add_option("--pred-dir", pred_dir, "directory of <id>.pgm probability maps")->required();
    edge_eval->add_option("--gt-dir", gt_dir, "directory of <id>[.k].pgm annotations")->required();
    edge_eval->add_flag("--nms", nms, "apply directional thinning before thresholding");
    edge_eval->add_option("--csv", csv_path, "write image_id,threshold,tp,fp,fn rows here");

    // edge-run
    std::string model = "baseline-grad", data = "synth-shapes-edge", run_out, run_csv;
    int count = 12, size = 64;
    long run_seed = -1;
    bool run_nms = false;
    auto* edge_run = app.add_subcommand("edge-run", "Run a model (or baseline) over a dataset");
    edge_run->add_option("--model", model, "checkpoint directory or baseline-grad");
    edge_run->add_option("--data", data, "dataset name (synth-shapes-edge)");
    edge_run->add_option("--count", count, "number of images");
    edge_run->add_option("--size", size, "image size");
    edge_run->add_option("--seed", run_seed, "dataset seed");
    edge_run->add_flag("--nms", run_nms, "apply directional thinning");
    edge_run->add_option("--out", run_out, "directory for probability maps");
    edge_run->add_option("--csv", run_csv, "metrics CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage error
    }

    if (apply->parsed()) {
        morphnas_image* img = nullptr;
        morphnas_se* se = nullptr;
        morphnas_image* result = nullptr;
        morphnas_status st = morphnas_image_read_pgm(in_path.c_str(), &img);
        if (st == MORPHNAS_OK) st = morphnas_se_parse(se_text.c_str(), &se);
        if (st == MORPHNAS_OK) st = morphnas_morph_apply(op.c_str(), img, se, &result);
        if (st == MORPHNAS_OK) st = morphnas_image_write_pgm(result, out_path.c_str(), bits);
        morphnas_image_free(img);
        morphnas_se_free(se);
        morphnas_image_free(result);
        if (st != MORPHNAS_OK) return report_failure(st);
        std::printf("op = %s\nse = %s\nin = %s\nout = %s\n", op.c_str(), se_text.c_str(),
                    in_path.c_str(), out_path.c_str());
        return 0;
    }

    if (layer_check->parsed()) {
        const long seed = resolve_seed(lc_seed);
        char report[4096];
        int all_pass = 0;
        const morphnas_status st = morphnas_layer_check(
            variant.c_str(), seed >= 0 ? static_cast<unsigned>(seed) : 1u, tol, report,
            sizeof(report), &all_pass);
        if (st != MORPHNAS_OK) return report_failure(st);
        std::printf("variant = %s\nseed = %ld\ntol = %g\n%s", variant.c_str(),
                    seed >= 0 ? seed : 1, tol, report);
        return all_pass ? 0 : 2;
    }

    if (search->parsed()) {
        double best = 0.0;
        const morphnas_status st = morphnas_search_run(
            space.c_str(), backbone.c_str(), config_path.empty() ? nullptr : config_path.c_str(),
            search_out.c_str(), resolve_seed(search_seed), jobs, &best);
        if (st != MORPHNAS_OK) return report_failure(st);
        std::printf("space = %s\nbackbone = %s\nout = %s\nbest_proxy_score = %.6f\n", space.c_str(),
                    backbone.c_str(), search_out.c_str(), best);
        return 0;
    }

    if (edge_eval->parsed()) {
        double metrics[4] = {0, 0, 0, 0};
        const morphnas_status st = morphnas_edge_eval_dirs(
            pred_dir.c_str(), gt_dir.c_str(), nms ? 1 : 0,
            csv_path.empty() ? nullptr : csv_path.c_str(), metrics);
        if (st != MORPHNAS_OK) return report_failure(st);
        std::printf("ODS\tOIS\tAP\tR50\n%.6f\t%.6f\t%.6f\t%.6f\n", metrics[0], metrics[1],
                    metrics[2], metrics[3]);
        return 0;
    }

    if (edge_run->parsed()) {
        const long seed = resolve_seed(run_seed);
        double metrics[4] = {0, 0, 0, 0};
        const morphnas_status st = morphnas_edge_run(
            model.c_str(), data.c_str(), count, size, seed >= 0 ? static_cast<unsigned>(seed) : 7u,
            run_nms ? 1 : 0, run_out.empty() ? nullptr : run_out.c_str(),
            run_csv.empty() ? nullptr : run_csv.c_str(), metrics);
        if (st != MORPHNAS_OK) return report_failure(st);
        std::printf("model = %s\ndata = %s\ncount = %d\nsize = %d\nseed = %ld\n", model.c_str(),
                    data.c_str(), count, size, seed >= 0 ? seed : 7);
        std::printf("ODS\tOIS\tAP\tR50\n%.6f\t%.6f\t%.6f\t%.6f\n", metrics[0], metrics[1],
                    metrics[2], metrics[3]);
        return 0;
    }

    return 1;
}
