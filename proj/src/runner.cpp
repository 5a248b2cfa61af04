#include "morphnas/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "morphnas/config.hpp"
#include "morphnas/network.hpp"
#include "morphnas/train.hpp"

namespace morphnas {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kSearchKeys = {
    "iterations", "candidates", "epochs", "eta", "lambda", "d", "seed",
    "train_n",    "val_n",      "size",   "classes", "lr", "batch",
    "retrain_epochs", "nao_epochs", "edge_n"};

SeqSchema schema_for(const std::string& space, BackboneKind kind, int b) {
    SeqSchema schema;
    schema.b = b;
    switch (kind) {
        case BackboneKind::CifarStack:
            schema.slots = {{space, CellKind::Normal}, {space, CellKind::Reduction}};
            break;
        case BackboneKind::UnetSearch:
            schema.slots = {{space, CellKind::DownSC}, {"upsc", CellKind::UpSC}};
            break;
        case BackboneKind::MultiscaleDecoder:
            schema.slots = {{space, CellKind::Normal}};
            break;
    }
    return schema;
}

std::pair<CellGraph, CellGraph> cells_for_build(const std::vector<CellGraph>& arch,
                                                BackboneKind kind) {
    if (kind == BackboneKind::MultiscaleDecoder) return {arch.at(0), arch.at(0)};
    return {arch.at(0), arch.at(1)};
}

double edge_score(Network& net, const EdgeDataset& val) {
    auto predictor = [&](const GrayImage& img) {
        auto x = Tensor<float>::create({1, 1, img.height, img.width});
        x->data.assign(img.pixels.begin(), img.pixels.end());
        auto y = net.forward(x, false);
        GrayImage out(img.height, img.width);
        out.pixels.assign(y->data.begin(), y->data.end());
        return out;
    };
    EdgePipelineOptions opts;
    opts.thresholds = default_thresholds(20);
    return edge_pipeline(predictor, val, opts).result.ods;
}

}  // namespace

SearchRunSummary run_search_command(const SearchRunOptions& opts) {
    RunConfig cfg;
    if (!opts.config_path.empty()) cfg = RunConfig::from_file(opts.config_path, kSearchKeys);

    const BackboneKind kind = backbone_kind_from_name(opts.backbone);
    SearchSpace::by_name(opts.space);  // validate early

    Backbone bb;
    bb.kind = kind;
    bb.b = 5;
    bb.n = 1;
    bb.f = 8;
    bb.in_channels = 1;

    SearchBudget budget;
    budget.iterations = cfg.get_int("iterations", 2);
    budget.candidates_per_iter = cfg.get_int("candidates", 8);
    budget.seed = opts.seed ? *opts.seed : static_cast<unsigned>(cfg.get_int("seed", 1));
    budget.jobs = opts.jobs;
    budget.nao.d = cfg.get_int("d", 64);
    budget.nao.eta = cfg.get_double("eta", 0.01);
    budget.nao.lambda = cfg.get_double("lambda", 0.8);
    budget.nao.epochs = cfg.get_int("nao_epochs", 150);
    const int proxy_epochs = cfg.get_int("epochs", 2);
    const int retrain_epochs = cfg.get_int("retrain_epochs", std::max(2 * proxy_epochs, 4));
    const double lr = cfg.get_double("lr", 0.05);
    const int batch = cfg.get_int("batch", 32);

    SearchTask task;
    task.schema = schema_for(opts.space, kind, bb.b);

    // Proxy evaluators hold their dataset by value; candidate trainings are
    // independent graphs, so parallel evaluation is safe.
    ClsSplits cls_data;
    EdgeDataset edge_train, edge_val;
    if (kind == BackboneKind::CifarStack) {
        bb.num_classes = cfg.get_int("classes", 4);
        cls_data = make_synth_shapes_cls(budget.seed * 7919u + 13u, cfg.get_int("train_n", 512),
                                         cfg.get_int("val_n", 256), 0, cfg.get_int("size", 16),
                                         bb.num_classes);
        task.evaluate = [&, proxy_epochs, lr, batch](const std::vector<CellGraph>& arch,
                                                     unsigned eval_seed) {
            auto [a, b] = cells_for_build(arch, kind);
            auto built = build_network(a, b, bb, eval_seed);
            SgdConfig tc;
            tc.epochs = proxy_epochs;
            tc.lr = lr;
            tc.batch = batch;
            tc.seed = eval_seed;
            train_classifier(*built.net, cls_data, tc);
            return 1.0 - classifier_error(*built.net, cls_data.val);
        };
    } else {
        const int edge_n = cfg.get_int("edge_n", 8);
        edge_train = make_synth_shapes_edge(budget.seed * 7919u + 13u, edge_n,
                                            cfg.get_int("size", 64));
        edge_val = make_synth_shapes_edge(budget.seed * 7919u + 14u, std::max(2, edge_n / 2),
                                          cfg.get_int("size", 64));
        task.evaluate = [&, proxy_epochs, lr, batch](const std::vector<CellGraph>& arch,
                                                     unsigned eval_seed) {
            auto [a, b] = cells_for_build(arch, kind);
            auto built = build_network(a, b, bb, eval_seed);
            SgdConfig tc;
            tc.epochs = proxy_epochs;
            tc.lr = lr;
            tc.batch = batch;
            tc.seed = eval_seed;
            train_edge(*built.net, edge_train, tc);
            return edge_score(*built.net, edge_val);
        };
    }

    const SearchResult result = search_loop(task, budget);

    fs::create_directories(opts.out_dir);
    SearchRunSummary summary;
    summary.best_score = result.best_score;
    summary.history_file = (fs::path(opts.out_dir) / "history.log").string();
    summary.best_cell_file = (fs::path(opts.out_dir) / "best_cell.txt").string();
    summary.report_file = (fs::path(opts.out_dir) / "report.txt").string();

    {
        std::ofstream hist(summary.history_file);
        for (const auto& e : result.history) hist << history_line(e) << "\n";
        std::ofstream best(summary.best_cell_file);
        for (const auto& c : result.best) best << cell_to_text(c) << "\n";
    }

    // Retrain the winning architecture at a larger budget and report.
    {
        auto [a, b] = cells_for_build(result.best, kind);
        auto built = build_network(a, b, bb, budget.seed + 999u);
        SgdConfig tc;
        tc.epochs = retrain_epochs;
        tc.lr = lr;
        tc.batch = batch;
        tc.seed = budget.seed + 999u;
        if (kind == BackboneKind::CifarStack) {
            train_classifier(*built.net, cls_data, tc);
            summary.retrained_metric = 1.0 - classifier_error(*built.net, cls_data.val);
        } else {
            train_edge(*built.net, edge_train, tc);
            summary.retrained_metric = edge_score(*built.net, edge_val);
        }
        save_checkpoint(built, (fs::path(opts.out_dir) / "best_ckpt").string());
    }

    {
        std::ofstream report(summary.report_file);
        report << "space = " << opts.space << "\n";
        report << "backbone = " << opts.backbone << "\n";
        report << "seed = " << budget.seed << "\n";
        report << "iterations = " << budget.iterations << "\n";
        report << "candidates = " << budget.candidates_per_iter << "\n";
        report << "proxy_epochs = " << proxy_epochs << "\n";
        report << "retrain_epochs = " << retrain_epochs << "\n";
        if (!opts.config_path.empty()) report << "# resolved config\n" << cfg.resolved();
        report << "best_proxy_score = " << result.best_score << "\n";
        report << "retrained_metric = " << summary.retrained_metric << "\n";
        report << "invalid_decodes = " << result.invalid_decodes << "\n";
    }
    return summary;
}

EdgeMetrics run_edge_eval_dirs(const std::string& pred_dir, const std::string& gt_dir, bool nms,
                               const std::string& csv_path) {
    std::vector<std::string> pred_files;
    for (const auto& entry : fs::directory_iterator(pred_dir))
        if (entry.path().extension() == ".pgm") pred_files.push_back(entry.path().string());
    if (pred_files.empty()) throw std::invalid_argument("edge-eval: no .pgm predictions in " + pred_dir);
    std::sort(pred_files.begin(), pred_files.end());

    std::vector<std::vector<F1Point>> per_image;
    std::vector<std::string> ids;
    const auto thresholds = default_thresholds();
    for (const auto& pf : pred_files) {
        const std::string id = fs::path(pf).stem().string();
        GrayImage pred = read_pgm(pf);
        float mx = 1.f;
        for (float v : pred.pixels) mx = std::max(mx, v);
        for (auto& v : pred.pixels) v /= mx;  // 8/16-bit maps to [0,1]
        if (nms) pred = edge_nms(pred);

        std::vector<GrayImage> gts;
        const fs::path base = fs::path(gt_dir) / (id + ".pgm");
        if (fs::exists(base)) gts.push_back(read_pgm(base.string()));
        for (int k = 0;; ++k) {
            const fs::path p = fs::path(gt_dir) / (id + "." + std::to_string(k) + ".pgm");
            if (!fs::exists(p)) break;
            gts.push_back(read_pgm(p.string()));
        }
        if (gts.empty())
            throw std::runtime_error("edge-eval: missing ground truth " + base.string());
        for (auto& gt : gts)
            for (auto& v : gt.pixels) v = v > 0.f ? 1.f : 0.f;
        per_image.push_back(f1_curve(pred, gts, thresholds, default_dmax(pred.height, pred.width)));
        ids.push_back(id);
    }
    const EdgeEvalResult res = ods_ois(per_image);
    if (!csv_path.empty()) write_metrics_csv(csv_path, ids, per_image);
    return {res.ods, res.ois, res.ap, res.r50};
}

EdgeMetrics run_edge_run(const EdgeRunOptions& opts) {
    if (opts.dataset != "synth-shapes-edge")
        throw std::invalid_argument("edge-run: unknown dataset '" + opts.dataset + "'");
    const EdgeDataset data = make_synth_shapes_edge(opts.seed, opts.count, opts.size);

    std::function<GrayImage(const GrayImage&)> predictor;
    BuiltNetwork built;
    if (opts.model == "baseline-grad") {
        predictor = classical_gradient_predictor;
    } else {
        built = load_checkpoint(opts.model);
        predictor = [&](const GrayImage& img) {
            auto x = Tensor<float>::create({1, 1, img.height, img.width});
            x->data.assign(img.pixels.begin(), img.pixels.end());
            auto y = built.net->forward(x, false);
            GrayImage out(img.height, img.width);
            out.pixels.assign(y->data.begin(), y->data.end());
            return out;
        };
    }

    EdgePipelineOptions popts;
    popts.nms = opts.nms;
    popts.out_dir = opts.out_dir;
    const auto out = edge_pipeline(predictor, data, popts);
    if (!opts.csv_path.empty()) write_metrics_csv(opts.csv_path, out.ids, out.per_image);
    return {out.result.ods, out.result.ois, out.result.ap, out.result.r50};
}

}  // namespace morphnas
