// Edge-detection evaluation: distance-tolerant F1 matching, ODS/OIS/AP/R50.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "morphnas/dataset.hpp"
#include "morphnas/image.hpp"

namespace morphnas {

// Per-threshold counts for one image. Under multi-annotator union counting
// the precision and recall numerators differ: tp_pred counts predicted pixels
// matched to at least one annotation, tp_gt counts matched annotation pixels
// summed over all annotators.
struct F1Point {
    double threshold = 0.0;
    std::int64_t tp_pred = 0, total_pred = 0;
    std::int64_t tp_gt = 0, total_gt = 0;

    double precision() const { return total_pred ? static_cast<double>(tp_pred) / total_pred : 0.0; }
    double recall() const { return total_gt ? static_cast<double>(tp_gt) / total_gt : 0.0; }
    double f1() const {
        const double p = precision(), r = recall();
        return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    }
};

// BSDS-style matching tolerance: 0.0075 x image diagonal.
double default_dmax(int height, int width);

std::vector<double> default_thresholds(int count = 50);

// Greedy nearest-first matching of thresholded prediction pixels against each
// annotation within Euclidean distance d_max (each pixel matched at most once
// per annotation map).
std::vector<F1Point> f1_curve(const GrayImage& pred, const std::vector<GrayImage>& gts,
                              const std::vector<double>& thresholds, double d_max);

struct EdgeEvalResult {
    std::vector<double> thresholds;
    std::vector<double> precision, recall;  // dataset-aggregated curve
    double ods = 0.0;
    double ois = 0.0;
    double ap = 0.0;
    double r50 = 0.0;
};

// Aggregates per-image curves. OIS is the mean over images of each image's
// best F1 (images with no annotated edges are skipped in the mean); asserts
// the OIS >= ODS invariant.
EdgeEvalResult ods_ois(const std::vector<std::vector<F1Point>>& per_image);

// Simple 3x3 directional non-maximum thinning of a probability map.
GrayImage edge_nms(const GrayImage& pred);

struct EdgePipelineOptions {
    std::vector<double> thresholds = default_thresholds();
    double d_max = -1.0;  // < 0 means the BSDS default for the image size
    bool nms = false;
    std::string out_dir;  // when set, probability maps are written as PGM + MTEN
};

struct EdgePipelineOutput {
    EdgeEvalResult result;
    std::vector<std::vector<F1Point>> per_image;
    std::vector<std::string> ids;
};

// Runs a predictor over the dataset and evaluates. The predictor maps an
// input image to an edge-probability map in [0,1].
EdgePipelineOutput edge_pipeline(const std::function<GrayImage(const GrayImage&)>& predictor,
                                 const EdgeDataset& data, const EdgePipelineOptions& opts);

// Classical baseline: normalized morphological gradient (square(1) SE).
GrayImage classical_gradient_predictor(const GrayImage& input);

// CSV rows: image_id,threshold,tp,fp,fn
void write_metrics_csv(const std::string& path, const std::vector<std::string>& ids,
                       const std::vector<std::vector<F1Point>>& per_image);

}  // namespace morphnas
