#include "morphnas.h"

#include <cstring>
#include <string>

#include "morphnas/image.hpp"
#include "morphnas/morphology.hpp"
#include "morphnas/mten.hpp"
#include "morphnas/runner.hpp"
#include "morphnas/verify.hpp"

struct morphnas_image {
    morphnas::GrayImage img;
};

struct morphnas_se {
    morphnas::StructuringElement se;
};

namespace {

thread_local std::string g_last_error;

morphnas_status fail(morphnas_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

// Exceptions cross the C boundary as status codes.
template <typename Fn>
morphnas_status guarded(Fn&& fn) {
    try {
        fn();
        return MORPHNAS_OK;
    } catch (const std::invalid_argument& e) {
        return fail(MORPHNAS_EINVAL, e.what());
    } catch (const std::exception& e) {
        return fail(MORPHNAS_ERUNTIME, e.what());
    }
}

}  // namespace

extern "C" {

const char* morphnas_version(void) { return "morphnas 1.0.0"; }

const char* morphnas_last_error(void) { return g_last_error.c_str(); }

morphnas_status morphnas_image_create(int height, int width, const float* pixels,
                                      morphnas_image** out) {
    if (!out || !pixels || height <= 0 || width <= 0)
        return fail(MORPHNAS_EINVAL, "image_create: bad arguments");
    return guarded([&] {
        auto* h = new morphnas_image{morphnas::GrayImage(height, width)};
        std::memcpy(h->img.pixels.data(), pixels,
                    static_cast<size_t>(height) * width * sizeof(float));
        *out = h;
    });
}

morphnas_status morphnas_image_read_pgm(const char* path, morphnas_image** out) {
    if (!path || !out) return fail(MORPHNAS_EINVAL, "image_read_pgm: bad arguments");
    return guarded([&] { *out = new morphnas_image{morphnas::read_pgm(path)}; });
}

morphnas_status morphnas_image_write_pgm(const morphnas_image* img, const char* path, int bits) {
    if (!img || !path) return fail(MORPHNAS_EINVAL, "image_write_pgm: bad arguments");
    return guarded([&] { morphnas::write_pgm(img->img, path, bits); });
}

morphnas_status morphnas_image_read_mten(const char* path, morphnas_image** out) {
    if (!path || !out) return fail(MORPHNAS_EINVAL, "image_read_mten: bad arguments");
    return guarded([&] {
        const auto md = morphnas::read_mten(path);
        if (md.dims.size() != 2) throw std::runtime_error("image_read_mten: expected rank-2 tensor");
        morphnas::GrayImage img(static_cast<int>(md.dims[0]), static_cast<int>(md.dims[1]));
        if (md.dtype == 1) {
            img.pixels = md.f32;
        } else {
            for (std::size_t i = 0; i < md.f64.size(); ++i)
                img.pixels[i] = static_cast<float>(md.f64[i]);
        }
        *out = new morphnas_image{std::move(img)};
    });
}

morphnas_status morphnas_image_write_mten(const morphnas_image* img, const char* path) {
    if (!img || !path) return fail(MORPHNAS_EINVAL, "image_write_mten: bad arguments");
    return guarded([&] {
        morphnas::write_mten_f32(path,
                                 {static_cast<std::uint32_t>(img->img.height),
                                  static_cast<std::uint32_t>(img->img.width)},
                                 img->img.pixels.data());
    });
}

int morphnas_image_height(const morphnas_image* img) { return img ? img->img.height : 0; }
int morphnas_image_width(const morphnas_image* img) { return img ? img->img.width : 0; }

morphnas_status morphnas_image_pixels(const morphnas_image* img, float* dst, size_t capacity) {
    if (!img || !dst) return fail(MORPHNAS_EINVAL, "image_pixels: bad arguments");
    if (capacity < img->img.pixels.size())
        return fail(MORPHNAS_EINVAL, "image_pixels: buffer too small");
    std::memcpy(dst, img->img.pixels.data(), img->img.pixels.size() * sizeof(float));
    return MORPHNAS_OK;
}

void morphnas_image_free(morphnas_image* img) { delete img; }

morphnas_status morphnas_se_parse(const char* text, morphnas_se** out) {
    if (!text || !out) return fail(MORPHNAS_EINVAL, "se_parse: bad arguments");
    return guarded([&] { *out = new morphnas_se{morphnas::StructuringElement::parse(text)}; });
}

void morphnas_se_free(morphnas_se* se) { delete se; }

morphnas_status morphnas_morph_apply(const char* op, const morphnas_image* input,
                                     const morphnas_se* se, morphnas_image** out) {
    if (!op || !input || !se || !out) return fail(MORPHNAS_EINVAL, "morph_apply: bad arguments");
    return guarded([&] {
        const std::string name = op;
        morphnas::GrayImage result;
        if (name == "erode") {
            result = morphnas::erode(input->img, se->se);
        } else if (name == "dilate") {
            result = morphnas::dilate(input->img, se->se);
        } else if (name == "open") {
            result = morphnas::opening(input->img, se->se);
        } else if (name == "close") {
            result = morphnas::closing(input->img, se->se);
        } else if (name == "grad-i") {
            result = morphnas::gradients(input->img, se->se).internal;
        } else if (name == "grad-e") {
            result = morphnas::gradients(input->img, se->se).external;
        } else if (name == "grad-m") {
            result = morphnas::gradients(input->img, se->se).combined;
        } else {
            throw std::invalid_argument("morph_apply: unknown op '" + name + "'");
        }
        *out = new morphnas_image{std::move(result)};
    });
}

morphnas_status morphnas_layer_check(const char* variant, unsigned seed, double rel_tol,
                                     char* report, size_t capacity, int* all_pass) {
    if (!variant || !all_pass) return fail(MORPHNAS_EINVAL, "layer_check: bad arguments");
    return guarded([&] {
        const auto v = morphnas::pseudo_variant_from_name(variant);
        const auto res = morphnas::layer_check(v, seed, rel_tol > 0 ? rel_tol : 1e-4);
        *all_pass = res.all_pass() ? 1 : 0;
        if (report && capacity > 0) {
            const std::string text = res.text();
            const size_t n = std::min(capacity - 1, text.size());
            std::memcpy(report, text.data(), n);
            report[n] = '\0';
        }
    });
}

morphnas_status morphnas_search_run(const char* space, const char* backbone,
                                    const char* config_path, const char* out_dir, long seed,
                                    int jobs, double* best_score) {
    if (!space || !backbone || !out_dir) return fail(MORPHNAS_EINVAL, "search_run: bad arguments");
    return guarded([&] {
        morphnas::SearchRunOptions opts;
        opts.space = space;
        opts.backbone = backbone;
        if (config_path) opts.config_path = config_path;
        opts.out_dir = out_dir;
        if (seed >= 0) opts.seed = static_cast<unsigned>(seed);
        opts.jobs = jobs > 0 ? jobs : 1;
        const auto summary = morphnas::run_search_command(opts);
        if (best_score) *best_score = summary.best_score;
    });
}

morphnas_status morphnas_edge_eval_dirs(const char* pred_dir, const char* gt_dir, int nms,
                                        const char* csv_path, double metrics[4]) {
    if (!pred_dir || !gt_dir || !metrics)
        return fail(MORPHNAS_EINVAL, "edge_eval_dirs: bad arguments");
    return guarded([&] {
        const auto m = morphnas::run_edge_eval_dirs(pred_dir, gt_dir, nms != 0,
                                                    csv_path ? csv_path : "");
        metrics[0] = m.ods;
        metrics[1] = m.ois;
        metrics[2] = m.ap;
        metrics[3] = m.r50;
    });
}

morphnas_status morphnas_edge_run(const char* model, const char* dataset, int count, int size,
                                  unsigned seed, int nms, const char* out_dir,
                                  const char* csv_path, double metrics[4]) {
    if (!model || !dataset || !metrics) return fail(MORPHNAS_EINVAL, "edge_run: bad arguments");
    return guarded([&] {
        morphnas::EdgeRunOptions opts;
        opts.model = model;
        opts.dataset = dataset;
        opts.count = count > 0 ? count : 12;
        opts.size = size > 0 ? size : 64;
        opts.seed = seed;
        opts.nms = nms != 0;
        if (out_dir) opts.out_dir = out_dir;
        if (csv_path) opts.csv_path = csv_path;
        const auto m = morphnas::run_edge_run(opts);
        metrics[0] = m.ods;
        metrics[1] = m.ois;
        metrics[2] = m.ap;
        metrics[3] = m.r50;
    });
}

}  // extern "C"
