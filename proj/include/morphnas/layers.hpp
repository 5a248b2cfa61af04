// Trainable layers: thin parameter-holding wrappers over the ops, plus the
// five pseudo-morphological layers (batch norm -> 1x1 projection ->
// pixel shuffle -> extremum pooling, with variant-specific tails).
#pragma once

#include <memory>
#include <random>

#include "morphnas/ops.hpp"

namespace morphnas {

template <typename T>
struct Module {
    virtual ~Module() = default;
    virtual Var<T> forward(const Var<T>& x, bool training) = 0;
    virtual void collect_params(std::vector<Var<T>>& out) = 0;
    // Non-parameter state (batch-norm running stats), for checkpoints.
    virtual void collect_buffers(std::vector<std::vector<T>*>&) {}
};

template <typename T>
using ModulePtr = std::unique_ptr<Module<T>>;

namespace init {

// Kaiming-style uniform over [-sqrt(6/fan_in), sqrt(6/fan_in)].
template <typename T>
void kaiming_uniform(Var<T>& w, int fan_in, std::mt19937& rng) {
    const T bound = std::sqrt(T(6) / static_cast<T>(fan_in));
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
    for (auto& v : w->data) v = static_cast<T>(dist(rng));
}

}  // namespace init

// Per-channel scaling of (N,C,H,W) by gates (N,C); used by the channel
// attention block.
template <typename T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& s) {
    auto [n, c, h, wd] = detail::as_nchw(x->shape, "scale_channels");
    if (s->rank() != 2 || s->dim(0) != n || s->dim(1) != c)
        throw std::invalid_argument("scale_channels: gate shape mismatch");
    const std::int64_t plane = static_cast<std::int64_t>(h) * wd;
    auto out = detail::binary_result(x, s, x->shape);
    for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
        const T g = s->data[pc];
        const T* p = x->data.data() + pc * plane;
        T* op = out->data.data() + pc * plane;
        for (std::int64_t i = 0; i < plane; ++i) op[i] = p[i] * g;
    }
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, s, o, n, c, plane] {
            if (x->requires_grad) x->ensure_grad();
            if (s->requires_grad) s->ensure_grad();
            for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
                const T* g = o->grad.data() + pc * plane;
                const T* p = x->data.data() + pc * plane;
                const T gate = s->data[pc];
                if (x->requires_grad) {
                    T* xg = x->grad.data() + pc * plane;
                    for (std::int64_t i = 0; i < plane; ++i) xg[i] += g[i] * gate;
                }
                if (s->requires_grad) {
                    T acc = T(0);
                    for (std::int64_t i = 0; i < plane; ++i) acc += g[i] * p[i];
                    s->grad[pc] += acc;
                }
            }
        };
    }
    return out;
}

template <typename T>
struct Conv2dLayer : Module<T> {
    Var<T> weight, bias;
    int stride = 1, pad = 0, groups = 1;

    Conv2dLayer(int c_in, int c_out, int k, int stride_, int pad_, std::mt19937& rng,
                bool with_bias = true, int groups_ = 1)
        : stride(stride_), pad(pad_), groups(groups_) {
        weight = Tensor<T>::create({c_out, c_in / groups_, k, k}, true);
        init::kaiming_uniform(weight, (c_in / groups_) * k * k, rng);
        if (with_bias) bias = Tensor<T>::create({c_out}, true);
    }

    Var<T> forward(const Var<T>& x, bool) override { return conv2d(x, weight, bias, stride, pad, groups); }

    void collect_params(std::vector<Var<T>>& out) override {
        out.push_back(weight);
        if (bias) out.push_back(bias);
    }
};

template <typename T>
struct TransposeConv2dLayer : Module<T> {
    Var<T> weight, bias;
    int stride = 1, pad = 0;

    TransposeConv2dLayer(int c_in, int c_out, int k, int stride_, int pad_, std::mt19937& rng)
        : stride(stride_), pad(pad_) {
        weight = Tensor<T>::create({c_in, c_out, k, k}, true);
        init::kaiming_uniform(weight, c_in * k * k, rng);
        bias = Tensor<T>::create({c_out}, true);
    }

    Var<T> forward(const Var<T>& x, bool) override { return conv_transpose2d(x, weight, bias, stride, pad); }

    void collect_params(std::vector<Var<T>>& out) override {
        out.push_back(weight);
        out.push_back(bias);
    }
};

template <typename T>
struct LinearLayer : Module<T> {
    Var<T> weight, bias;

    LinearLayer(int in, int out, std::mt19937& rng) {
        weight = Tensor<T>::create({out, in}, true);
        init::kaiming_uniform(weight, in, rng);
        bias = Tensor<T>::create({out}, true);
    }

    Var<T> forward(const Var<T>& x, bool) override { return linear(x, weight, bias); }

    void collect_params(std::vector<Var<T>>& out) override {
        out.push_back(weight);
        out.push_back(bias);
    }
};

template <typename T>
struct BatchNorm2dLayer : Module<T> {
    Var<T> gamma, beta;
    std::vector<T> running_mean, running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);
    bool frozen_identity = false;  // exact pass-through, for oracle tests

    explicit BatchNorm2dLayer(int c) {
        gamma = Tensor<T>::from_data({c}, std::vector<T>(c, T(1)), true);
        beta = Tensor<T>::create({c}, true);
        running_mean.assign(c, T(0));
        running_var.assign(c, T(1));
    }

    // Freezes to the identity map: scale 1, shift 0, stats (0,1), eps 0, and
    // eval-mode statistics regardless of the training flag.
    void freeze_identity() {
        std::fill(gamma->data.begin(), gamma->data.end(), T(1));
        std::fill(beta->data.begin(), beta->data.end(), T(0));
        std::fill(running_mean.begin(), running_mean.end(), T(0));
        std::fill(running_var.begin(), running_var.end(), T(1));
        eps = T(0);
        frozen_identity = true;
    }

    Var<T> forward(const Var<T>& x, bool training) override {
        return batch_norm(x, gamma, beta, running_mean, running_var, training && !frozen_identity,
                          momentum, eps);
    }

    void collect_params(std::vector<Var<T>>& out) override {
        out.push_back(gamma);
        out.push_back(beta);
    }

    void collect_buffers(std::vector<std::vector<T>*>& out) override {
        out.push_back(&running_mean);
        out.push_back(&running_var);
    }
};

// -------------------------------------------------------------------------
// Pseudo-morphological layers.
//
// Pipeline: batch norm -> 1x1 projection convolution producing r^2 (or
// r^2*s^2) neighborhood maps per input channel -> pixel shuffle -> extremum
// pooling of kernel r and stride r. For r >= 2 the pooling windows are
// anchored one pixel past each shuffle block so that each window straddles
// block boundaries; the pooled value is then an extremum of the projected
// map over a 2x2 base-pixel support where each of the r^2 projection biases
// is tied to a fixed sub-offset. With a one-hot projection and frozen batch
// norm, the layer collapses exactly to a classical weighted dilation or
// erosion of the input.

enum class PseudoVariant { Dilation, Erosion, Pooling, Upsampling, Gradient };

struct PseudoLayerConfig {
    PseudoVariant variant = PseudoVariant::Dilation;
    int r = 2;      // SE scale / shuffle factor
    int s = 1;      // extra upsampling factor (>= 2 only for Upsampling)
    int c_in = 1;
    int c_out = 0;  // 0 means c_in; anything else enables a trailing 1x1 conv

    void validate() const {
        if (r < 1 || c_in < 1) throw std::invalid_argument("pseudo layer: r and c_in must be >= 1");
        if (variant == PseudoVariant::Upsampling) {
            if (s < 2) throw std::invalid_argument("pseudo upsampling: s must be >= 2 (use dilation for s=1)");
        } else if (s != 1) {
            throw std::invalid_argument("pseudo layer: s != 1 only valid for the upsampling variant");
        }
        if (variant == PseudoVariant::Gradient && c_out != 0 && c_out != c_in)
            throw std::invalid_argument("pseudo gradient: c_out must equal c_in");
    }
    int out_channels() const { return c_out == 0 ? c_in : c_out; }
    int shuffle_factor() const { return variant == PseudoVariant::Upsampling ? r * s : r; }
    int proj_channels() const { return c_in * shuffle_factor() * shuffle_factor(); }
};

// Base-pixel offset tied to sub-channel row/col index a in [0,r): the
// anchored window samples sub-offset a at base offset +1 exactly when a == 0.
inline int pseudo_sub_offset(int r, int a) { return (r >= 2 && a == 0) ? 1 : 0; }

template <typename T>
struct PseudoLayer : Module<T> {
    PseudoLayerConfig cfg;
    BatchNorm2dLayer<T> bn;
    Conv2dLayer<T> proj;                    // 1x1, c_in -> c_in * shuffle^2
    std::unique_ptr<Conv2dLayer<T>> tail;   // optional 1x1 when c_out != c_in

    PseudoLayer(PseudoLayerConfig cfg_, std::mt19937& rng)
        : cfg(cfg_),
          bn((cfg_.validate(), cfg_.c_in)),
          proj(cfg_.c_in, cfg_.proj_channels(), 1, 1, 0, rng) {
        if (cfg.out_channels() != cfg.c_in) {
            if (cfg.variant == PseudoVariant::Gradient)
                throw std::invalid_argument("pseudo gradient: channel mismatch with cfg");
            tail = std::make_unique<Conv2dLayer<T>>(cfg.c_in, cfg.out_channels(), 1, 1, 0, rng);
        }
    }

    // One-hot projection: output channel c*k^2 + q copies input channel c and
    // carries bias biases[q]; the collapse-to-classical-morphology setup.
    void set_one_hot_projection(const std::vector<T>& biases) {
        const int k2 = cfg.shuffle_factor() * cfg.shuffle_factor();
        if (static_cast<int>(biases.size()) != k2)
            throw std::invalid_argument("pseudo layer: need one bias per sub-channel");
        std::fill(proj.weight->data.begin(), proj.weight->data.end(), T(0));
        for (int c = 0; c < cfg.c_in; ++c)
            for (int q = 0; q < k2; ++q) {
                // weight shape (c_in*k2, c_in, 1, 1)
                proj.weight->data[static_cast<std::int64_t>(c * k2 + q) * cfg.c_in + c] = T(1);
                proj.bias->data[c * k2 + q] = biases[q];
            }
    }

    Var<T> forward(const Var<T>& x, bool training) override {
        auto [n, c, h, w] = detail::as_nchw(x->shape, "pseudo layer");
        (void)n;
        if (c != cfg.c_in)
            throw std::invalid_argument("pseudo layer: expected " + std::to_string(cfg.c_in) +
                                        " channels, got " + std::to_string(c));
        if (cfg.variant == PseudoVariant::Pooling && (h % 2 != 0 || w % 2 != 0))
            throw std::invalid_argument("pseudo pooling: spatial dims must be even, got " +
                                        shape_str(x->shape));
        const int f = cfg.shuffle_factor();
        auto g = proj.forward(bn.forward(x, training), training);
        auto shuffled = pixel_shuffle(g, f);
        const PoolMode mode = cfg.variant == PseudoVariant::Erosion ? PoolMode::Min : PoolMode::Max;
        Var<T> pooled = cfg.r >= 2 ? pool2d_anchored(shuffled, mode, cfg.r, cfg.r, 1) : shuffled;
        switch (cfg.variant) {
            case PseudoVariant::Dilation:
            case PseudoVariant::Erosion:
            case PseudoVariant::Upsampling:
                break;
            case PseudoVariant::Pooling:
                pooled = pool2d(pooled, PoolMode::Max, 2, 2);
                break;
            case PseudoVariant::Gradient:
                pooled = sub(pooled, x);
                break;
        }
        if (tail) pooled = tail->forward(pooled, training);
        return pooled;
    }

    void collect_params(std::vector<Var<T>>& out) override {
        bn.collect_params(out);
        proj.collect_params(out);
        if (tail) tail->collect_params(out);
    }

    void collect_buffers(std::vector<std::vector<T>*>& out) override { bn.collect_buffers(out); }
};

// Depthwise-separable convolution: relu -> k x k depthwise -> 1x1 pointwise -> BN.
template <typename T>
struct SepConvLayer : Module<T> {
    Conv2dLayer<T> depthwise, pointwise;
    BatchNorm2dLayer<T> bn;

    SepConvLayer(int c_in, int c_out, int k, int stride, std::mt19937& rng)
        : depthwise(c_in, c_in, k, stride, k / 2, rng, false, c_in),
          pointwise(c_in, c_out, 1, 1, 0, rng, true),
          bn(c_out) {}

    Var<T> forward(const Var<T>& x, bool training) override {
        return bn.forward(pointwise.forward(depthwise.forward(relu(x), training), training), training);
    }

    void collect_params(std::vector<Var<T>>& out) override {
        depthwise.collect_params(out);
        pointwise.collect_params(out);
        bn.collect_params(out);
    }

    void collect_buffers(std::vector<std::vector<T>*>& out) override { bn.collect_buffers(out); }
};

// 3x3 convolution gated by squeeze-and-excitation channel attention.
template <typename T>
struct CWeightLayer : Module<T> {
    Conv2dLayer<T> conv;
    LinearLayer<T> fc1, fc2;
    BatchNorm2dLayer<T> bn;

    CWeightLayer(int c_in, int c_out, int stride, std::mt19937& rng, int reduction = 4)
        : conv(c_in, c_out, 3, stride, 1, rng),
          fc1(c_out, std::max(1, c_out / reduction), rng),
          fc2(std::max(1, c_out / reduction), c_out, rng),
          bn(c_out) {}

    Var<T> forward(const Var<T>& x, bool training) override {
        auto y = bn.forward(conv.forward(relu(x), training), training);
        auto squeezed = global_avg_pool(y->rank() == 3 ? reshape(y, {1, y->dim(0), y->dim(1), y->dim(2)}) : y);
        auto gate = sigmoid(fc2.forward(relu(fc1.forward(squeezed, training)), training));
        if (y->rank() == 3) {
            auto y4 = reshape(y, {1, y->dim(0), y->dim(1), y->dim(2)});
            auto scaled = scale_channels(y4, gate);
            return reshape(scaled, y->shape);
        }
        return scale_channels(y, gate);
    }

    void collect_params(std::vector<Var<T>>& out) override {
        conv.collect_params(out);
        fc1.collect_params(out);
        fc2.collect_params(out);
        bn.collect_params(out);
    }

    void collect_buffers(std::vector<std::vector<T>*>& out) override { bn.collect_buffers(out); }
};

}  // namespace morphnas
