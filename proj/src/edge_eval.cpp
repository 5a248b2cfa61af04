#include "morphnas/edge_eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "morphnas/morphology.hpp"
#include "morphnas/mten.hpp"

namespace morphnas {

double default_dmax(int height, int width) {
    return 0.0075 * std::sqrt(static_cast<double>(height) * height +
                              static_cast<double>(width) * width);
}

std::vector<double> default_thresholds(int count) {
    std::vector<double> t(count);
    for (int i = 0; i < count; ++i) t[i] = (i + 1.0) / (count + 1.0);
    return t;
}

namespace {

struct Pixel {
    int y, x;
};

std::vector<Pixel> threshold_pixels(const GrayImage& img, double t) {
    std::vector<Pixel> out;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (img.at(y, x) >= static_cast<float>(t)) out.push_back({y, x});
    return out;
}

std::vector<Pixel> positive_pixels(const GrayImage& img) {
    std::vector<Pixel> out;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (img.at(y, x) > 0.f) out.push_back({y, x});
    return out;
}

// Maximum-cardinality bipartite matching (Hopcroft-Karp) of prediction pixels
// against annotation pixels within d_max. F1 depends only on the match count,
// so maximum cardinality is the exact benchmark quantity. Returns (#matched,
// matched flag per prediction pixel). Deterministic: adjacency is built in
// row-major scan order.
std::pair<std::int64_t, std::vector<char>> match_pixels(const std::vector<Pixel>& preds,
                                                        const std::vector<Pixel>& gts, double d_max,
                                                        int height, int width) {
    std::vector<char> pred_matched(preds.size(), 0);
    if (preds.empty() || gts.empty()) return {0, pred_matched};

    // Bin gt pixels for radius lookups.
    std::vector<std::vector<int>> bins(static_cast<std::size_t>(height) * width);
    for (std::size_t gi = 0; gi < gts.size(); ++gi)
        bins[static_cast<std::size_t>(gts[gi].y) * width + gts[gi].x].push_back(static_cast<int>(gi));

    const int radius = static_cast<int>(std::floor(d_max));
    const double d2max = d_max * d_max;
    std::vector<std::vector<int>> adj(preds.size());
    for (std::size_t pi = 0; pi < preds.size(); ++pi) {
        const Pixel& p = preds[pi];
        for (int dy = -radius; dy <= radius; ++dy) {
            const int y = p.y + dy;
            if (y < 0 || y >= height) continue;
            for (int dx = -radius; dx <= radius; ++dx) {
                const int x = p.x + dx;
                if (x < 0 || x >= width) continue;
                if (static_cast<double>(dy) * dy + static_cast<double>(dx) * dx > d2max) continue;
                for (int gi : bins[static_cast<std::size_t>(y) * width + x])
                    adj[pi].push_back(gi);
            }
        }
    }

    constexpr int kInf = std::numeric_limits<int>::max();
    std::vector<int> match_p(preds.size(), -1), match_g(gts.size(), -1);
    std::vector<int> dist(preds.size(), 0);
    std::vector<int> queue;
    queue.reserve(preds.size());

    auto bfs = [&] {
        queue.clear();
        bool found = false;
        for (std::size_t pi = 0; pi < preds.size(); ++pi) {
            if (match_p[pi] < 0) {
                dist[pi] = 0;
                queue.push_back(static_cast<int>(pi));
            } else {
                dist[pi] = kInf;
            }
        }
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const int pi = queue[head];
            for (int gi : adj[pi]) {
                const int next = match_g[gi];
                if (next < 0) {
                    found = true;
                } else if (dist[next] == kInf) {
                    dist[next] = dist[pi] + 1;
                    queue.push_back(next);
                }
            }
        }
        return found;
    };
    std::function<bool(int)> dfs = [&](int pi) {
        for (int gi : adj[pi]) {
            const int next = match_g[gi];
            if (next < 0 || (dist[next] == dist[pi] + 1 && dfs(next))) {
                match_p[pi] = gi;
                match_g[gi] = pi;
                return true;
            }
        }
        dist[pi] = kInf;
        return false;
    };

    std::int64_t matched = 0;
    while (bfs())
        for (std::size_t pi = 0; pi < preds.size(); ++pi)
            if (match_p[pi] < 0 && dfs(static_cast<int>(pi))) ++matched;
    for (std::size_t pi = 0; pi < preds.size(); ++pi)
        if (match_p[pi] >= 0) pred_matched[pi] = 1;
    return {matched, pred_matched};
}

}  // namespace

std::vector<F1Point> f1_curve(const GrayImage& pred, const std::vector<GrayImage>& gts,
                              const std::vector<double>& thresholds, double d_max) {
    if (gts.empty()) throw std::invalid_argument("f1_curve: need at least one annotation map");
    for (const auto& gt : gts)
        if (!gt.same_size(pred))
            throw std::invalid_argument("f1_curve: prediction and annotation sizes differ");
    for (double t : thresholds)
        if (t <= 0.0 || t >= 1.0) throw std::invalid_argument("f1_curve: thresholds must be in (0,1)");
    if (d_max < 0) throw std::invalid_argument("f1_curve: d_max must be >= 0");

    std::vector<std::vector<Pixel>> gt_pixels;
    std::int64_t total_gt = 0;
    for (const auto& gt : gts) {
        gt_pixels.push_back(positive_pixels(gt));
        total_gt += static_cast<std::int64_t>(gt_pixels.back().size());
    }

    std::vector<F1Point> curve;
    curve.reserve(thresholds.size());
    for (double t : thresholds) {
        F1Point pt;
        pt.threshold = t;
        pt.total_gt = total_gt;
        const auto preds = threshold_pixels(pred, t);
        pt.total_pred = static_cast<std::int64_t>(preds.size());
        std::vector<char> matched_any(preds.size(), 0);
        for (const auto& gp : gt_pixels) {
            auto [count, pred_matched] = match_pixels(preds, gp, d_max, pred.height, pred.width);
            pt.tp_gt += count;
            for (std::size_t i = 0; i < preds.size(); ++i)
                if (pred_matched[i]) matched_any[i] = 1;
        }
        pt.tp_pred = std::count(matched_any.begin(), matched_any.end(), 1);
        curve.push_back(pt);
    }
    return curve;
}

EdgeEvalResult ods_ois(const std::vector<std::vector<F1Point>>& per_image) {
    if (per_image.empty()) throw std::invalid_argument("ods_ois: no images evaluated");
    const std::size_t nt = per_image.front().size();
    if (nt == 0) throw std::invalid_argument("ods_ois: empty threshold sweep");
    for (const auto& c : per_image)
        if (c.size() != nt) throw std::invalid_argument("ods_ois: inconsistent threshold counts");

    EdgeEvalResult res;
    res.thresholds.resize(nt);
    res.precision.resize(nt);
    res.recall.resize(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        F1Point agg;
        agg.threshold = per_image.front()[t].threshold;
        for (const auto& c : per_image) {
            agg.tp_pred += c[t].tp_pred;
            agg.total_pred += c[t].total_pred;
            agg.tp_gt += c[t].tp_gt;
            agg.total_gt += c[t].total_gt;
        }
        res.thresholds[t] = agg.threshold;
        res.precision[t] = agg.precision();
        res.recall[t] = agg.recall();
        res.ods = std::max(res.ods, agg.f1());
    }

    double ois_sum = 0.0;
    int ois_count = 0;
    for (const auto& c : per_image) {
        if (c.front().total_gt == 0) continue;
        double best = 0.0;
        for (const auto& pt : c) best = std::max(best, pt.f1());
        ois_sum += best;
        ++ois_count;
    }
    res.ois = ois_count ? ois_sum / ois_count : res.ods;
    if (res.ois + 1e-9 < res.ods)
        throw std::runtime_error("ods_ois: OIS < ODS, which the evaluation contract forbids");

    // AP: trapezoid over the aggregated P-R curve, swept from high threshold
    // (low recall) to low. Extends to recall 0 at the first point's precision.
    std::vector<std::pair<double, double>> pr;  // (recall, precision), increasing recall
    for (std::size_t t = nt; t-- > 0;) pr.emplace_back(res.recall[t], res.precision[t]);
    std::reverse(pr.begin(), pr.end());  // high threshold first -> recall ascending
    double ap = 0.0, prev_r = 0.0, prev_p = pr.empty() ? 0.0 : pr.front().second;
    for (const auto& [r, p] : pr) {
        if (r > prev_r) ap += (r - prev_r) * 0.5 * (p + prev_p);
        prev_r = std::max(prev_r, r);
        prev_p = p;
    }
    res.ap = ap;

    // R50: largest recall with precision >= 0.5, interpolating between curve
    // samples where precision crosses 0.5.
    double r50 = 0.0;
    for (std::size_t i = 0; i < pr.size(); ++i) {
        const auto [r, p] = pr[i];
        if (p >= 0.5) {
            r50 = std::max(r50, r);
        } else if (i > 0) {
            const auto [r0, p0] = pr[i - 1];
            if (p0 >= 0.5 && p0 != p) {
                const double frac = (p0 - 0.5) / (p0 - p);
                r50 = std::max(r50, r0 + frac * (r - r0));
            }
        }
    }
    res.r50 = r50;
    return res;
}

GrayImage edge_nms(const GrayImage& pred) {
    GrayImage out = pred;
    auto sample = [&](int y, int x) -> float {
        if (y < 0 || y >= pred.height || x < 0 || x >= pred.width) return 0.f;
        return pred.at(y, x);
    };
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            const float gx = sample(y, x + 1) - sample(y, x - 1);
            const float gy = sample(y + 1, x) - sample(y - 1, x);
            int dy, dx;
            if (std::abs(gx) >= 2.414f * std::abs(gy)) {  // horizontal gradient
                dy = 0;
                dx = 1;
            } else if (std::abs(gy) >= 2.414f * std::abs(gx)) {
                dy = 1;
                dx = 0;
            } else if (gx * gy > 0) {
                dy = 1;
                dx = 1;
            } else {
                dy = 1;
                dx = -1;
            }
            const float v = pred.at(y, x);
            if (v < sample(y + dy, x + dx) || v < sample(y - dy, x - dx)) out.at(y, x) = 0.f;
        }
    return out;
}

GrayImage classical_gradient_predictor(const GrayImage& input) {
    return normalize01(gradients(input, StructuringElement::square(1)).combined);
}

EdgePipelineOutput edge_pipeline(const std::function<GrayImage(const GrayImage&)>& predictor,
                                 const EdgeDataset& data, const EdgePipelineOptions& opts) {
    if (data.samples.empty()) throw std::invalid_argument("edge_pipeline: empty dataset");
    namespace fs = std::filesystem;
    if (!opts.out_dir.empty()) fs::create_directories(opts.out_dir);

    EdgePipelineOutput out;
    for (const auto& sample : data.samples) {
        GrayImage prob = predictor(sample.image);
        if (!prob.same_size(sample.image))
            throw std::runtime_error("edge_pipeline: predictor changed the image size");
        if (opts.nms) prob = edge_nms(prob);
        const double dmax = opts.d_max >= 0 ? opts.d_max : default_dmax(prob.height, prob.width);
        out.per_image.push_back(f1_curve(prob, sample.gts, opts.thresholds, dmax));
        out.ids.push_back(sample.id);
        if (!opts.out_dir.empty()) {
            GrayImage scaled = prob;
            for (auto& p : scaled.pixels) p *= 255.f;
            write_pgm(scaled, (fs::path(opts.out_dir) / (sample.id + ".pgm")).string(), 8);
            write_mten_f32((fs::path(opts.out_dir) / (sample.id + ".mten")).string(),
                           {static_cast<std::uint32_t>(prob.height),
                            static_cast<std::uint32_t>(prob.width)},
                           prob.pixels.data());
        }
    }
    out.result = ods_ois(out.per_image);
    return out;
}

void write_metrics_csv(const std::string& path, const std::vector<std::string>& ids,
                       const std::vector<std::vector<F1Point>>& per_image) {
    if (ids.size() != per_image.size())
        throw std::invalid_argument("write_metrics_csv: id/curve count mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_metrics_csv: cannot write " + path);
    out << "image_id,threshold,tp,fp,fn\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (const auto& pt : per_image[i])
            out << ids[i] << "," << pt.threshold << "," << pt.tp_pred << ","
                << (pt.total_pred - pt.tp_pred) << "," << (pt.total_gt - pt.tp_gt) << "\n";
}

}  // namespace morphnas
