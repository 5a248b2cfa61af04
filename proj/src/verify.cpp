#include "morphnas/verify.hpp"

#include <cstring>
#include <sstream>

#include "morphnas/gradcheck.hpp"
#include "morphnas/morphology.hpp"

namespace morphnas {

bool CheckReport::all_pass() const {
    for (const auto& l : lines)
        if (!l.pass) return false;
    return true;
}

std::string CheckReport::text() const {
    std::ostringstream os;
    for (const auto& l : lines) {
        os << (l.pass ? "PASS " : "FAIL ") << l.name;
        if (!l.pass && !l.detail.empty()) os << ": " << l.detail;
        os << "\n";
    }
    return os.str();
}

std::string pseudo_variant_name(PseudoVariant v) {
    switch (v) {
        case PseudoVariant::Dilation: return "dilation";
        case PseudoVariant::Erosion: return "erosion";
        case PseudoVariant::Pooling: return "pooling";
        case PseudoVariant::Upsampling: return "upsampling";
        case PseudoVariant::Gradient: return "gradient";
    }
    return "dilation";
}

PseudoVariant pseudo_variant_from_name(const std::string& s) {
    if (s == "dilation") return PseudoVariant::Dilation;
    if (s == "erosion") return PseudoVariant::Erosion;
    if (s == "pooling") return PseudoVariant::Pooling;
    if (s == "upsampling") return PseudoVariant::Upsampling;
    if (s == "gradient") return PseudoVariant::Gradient;
    throw std::invalid_argument("unknown pseudo-layer variant '" + s + "'");
}

namespace {

PseudoLayerConfig collapse_config(PseudoVariant variant) {
    PseudoLayerConfig cfg;
    cfg.variant = variant;
    cfg.r = 2;
    cfg.s = variant == PseudoVariant::Upsampling ? 2 : 1;
    cfg.c_in = 1;
    return cfg;
}

// Random integer-valued image: exactly representable in f32, no pooling ties
// in generic positions matter because equality is checked bitwise anyway.
GrayImage random_int_image(int h, int w, std::mt19937& rng) {
    std::uniform_int_distribution<int> pix(-8, 8);
    GrayImage img(h, w);
    for (auto& p : img.pixels) p = static_cast<float>(pix(rng));
    return img;
}

// The forward 2x2 neighborhood as a dilation SE: picking f[n+d], d in {0,1}^2
// needs offsets (-1..0)^2 under the f[n-i,n-j] convention.
StructuringElement forward_box_dilation_se(int extent) {
    StructuringElement se;
    for (int i = -extent; i <= 0; ++i)
        for (int j = -extent; j <= 0; ++j) se.entries.push_back({i, j, 0.f});
    return se;
}

StructuringElement forward_box_erosion_se(int extent) {
    StructuringElement se;
    for (int i = 0; i <= extent; ++i)
        for (int j = 0; j <= extent; ++j) se.entries.push_back({i, j, 0.f});
    return se;
}

// Classical expectation for the collapse setup, per variant. All routes go
// through the image-domain morphology module (or an explicit loop for the
// upsampling composition), never through the tensor engine.
std::vector<float> classical_expectation(PseudoVariant variant, const GrayImage& img) {
    switch (variant) {
        case PseudoVariant::Dilation: {
            return dilate(img, forward_box_dilation_se(1)).pixels;
        }
        case PseudoVariant::Erosion: {
            return erode(img, forward_box_erosion_se(1)).pixels;
        }
        case PseudoVariant::Gradient: {
            const GrayImage d = dilate(img, forward_box_dilation_se(1));
            std::vector<float> out(img.pixels.size());
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = d.pixels[i] - img.pixels[i];
            return out;
        }
        case PseudoVariant::Pooling: {
            // max over the composed 3x3 forward window, subsampled by 2
            const GrayImage d = dilate(img, forward_box_dilation_se(2));
            std::vector<float> out;
            for (int y = 0; y < img.height; y += 2)
                for (int x = 0; x < img.width; x += 2) out.push_back(d.at(y, x));
            return out;
        }
        case PseudoVariant::Upsampling: {
            // step-by-step composition: one-hot projection (copy + zero bias),
            // pixel shuffle by r*s, then the anchored max of kernel/stride r
            const int r = 2, s = 2, f = r * s;
            const int oh = s * img.height, ow = s * img.width;
            std::vector<float> out(static_cast<std::size_t>(oh) * ow);
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    float best = -std::numeric_limits<float>::infinity();
                    for (int u = 0; u < r; ++u)
                        for (int v = 0; v < r; ++v) {
                            const int sy = r * y + 1 + u, sx = r * x + 1 + v;
                            if (sy >= f * img.height || sx >= f * img.width) continue;
                            best = std::max(best, img.at(sy / f, sx / f));
                        }
                    out[static_cast<std::size_t>(y) * ow + x] = best;
                }
            return out;
        }
    }
    return {};
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) return false;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

PseudoLayerConfig grad_config(PseudoVariant variant, int c = 2) {
    PseudoLayerConfig cfg;
    cfg.variant = variant;
    cfg.r = 2;
    cfg.s = variant == PseudoVariant::Upsampling ? 2 : 1;
    cfg.c_in = c;
    return cfg;
}

}  // namespace

CheckReport::Line collapse_check(PseudoVariant variant, unsigned seed, int images) {
    CheckReport::Line line;
    line.name = "oracle-collapse(" + pseudo_variant_name(variant) + ")";
    std::mt19937 rng(seed);
    PseudoLayer<float> layer(collapse_config(variant), rng);
    layer.bn.freeze_identity();
    layer.set_one_hot_projection(
        std::vector<float>(static_cast<std::size_t>(layer.cfg.shuffle_factor() * layer.cfg.shuffle_factor()),
                           0.f));
    for (int i = 0; i < images; ++i) {
        const GrayImage img = random_int_image(8, 8, rng);
        auto x = Tensor<float>::from_data({1, 8, 8},
                                          std::vector<float>(img.pixels.begin(), img.pixels.end()));
        const auto y = layer.forward(x, false);
        const auto expected = classical_expectation(variant, img);
        if (!bitwise_equal(y->data, expected)) {
            line.pass = false;
            line.detail = "mismatch on image " + std::to_string(i);
            return line;
        }
    }
    line.pass = true;
    return line;
}

CheckReport::Line pseudo_gradient_check(PseudoVariant variant, unsigned seed, double rel_tol,
                                        int probes) {
    CheckReport::Line line;
    line.name = "gradient-check(" + pseudo_variant_name(variant) + ")";
    // Genericity is a property of the sampled point: a draw whose pooling
    // windows hold near-ties is redrawn. A real backward bug fails every draw.
    GradCheckResult res;
    for (int attempt = 0; attempt < 3; ++attempt) {
        std::mt19937 rng(seed + 101 * static_cast<unsigned>(attempt));
        PseudoLayer<double> layer(grad_config(variant), rng);
        const int h = variant == PseudoVariant::Upsampling ? 3 : 4;
        const int w = h;
        auto x = Tensor<double>::create({2, h, w}, true);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        for (auto& v : x->data) v = dist(rng);
        for (auto& v : layer.proj.bias->data) v = 0.1 * dist(rng);

        auto fn = [&]() { return sum(layer.forward(x, true)); };
        std::vector<Var<double>> leaves = {x, layer.proj.weight, layer.proj.bias, layer.bn.gamma,
                                           layer.bn.beta};
        res = gradcheck(fn, leaves, probes, rng, rel_tol);
        if (res.ok) break;
    }
    line.pass = res.ok;
    line.detail = res.ok ? "" : res.detail;
    return line;
}

CheckReport::Line shape_contract_check(PseudoVariant variant, unsigned seed) {
    CheckReport::Line line;
    line.name = "shape-contract(" + pseudo_variant_name(variant) + ")";
    std::mt19937 rng(seed);
    PseudoLayer<float> layer(grad_config(variant, 3), rng);
    auto x = Tensor<float>::create({3, 8, 6});
    std::uniform_real_distribution<float> dist(-1.f, 1.f);
    for (auto& v : x->data) v = dist(rng);
    const auto y = layer.forward(x, false);
    Shape expect;
    switch (variant) {
        case PseudoVariant::Dilation:
        case PseudoVariant::Erosion:
        case PseudoVariant::Gradient: expect = {3, 8, 6}; break;
        case PseudoVariant::Pooling: expect = {3, 4, 3}; break;
        case PseudoVariant::Upsampling: expect = {3, 16, 12}; break;
    }
    line.pass = y->shape == expect;
    if (!line.pass) line.detail = "got " + shape_str(y->shape) + ", expected " + shape_str(expect);
    return line;
}

CheckReport::Line determinism_check(PseudoVariant variant, unsigned seed) {
    CheckReport::Line line;
    line.name = "determinism(" + pseudo_variant_name(variant) + ")";
    auto run = [&]() {
        std::mt19937 rng(seed);
        PseudoLayer<float> layer(grad_config(variant), rng);
        auto x = Tensor<float>::create({2, 4, 4});
        std::uniform_real_distribution<float> dist(-1.f, 1.f);
        for (auto& v : x->data) v = dist(rng);
        return layer.forward(x, false)->data;
    };
    line.pass = bitwise_equal(run(), run());
    if (!line.pass) line.detail = "two identical runs differ";
    return line;
}

CheckReport layer_check(PseudoVariant variant, unsigned seed, double rel_tol, int images,
                        int probes) {
    CheckReport report;
    report.lines.push_back(collapse_check(variant, seed, images));
    report.lines.push_back(pseudo_gradient_check(variant, seed + 1, rel_tol, probes));
    report.lines.push_back(shape_contract_check(variant, seed + 2));
    report.lines.push_back(determinism_check(variant, seed + 3));
    return report;
}

}  // namespace morphnas
