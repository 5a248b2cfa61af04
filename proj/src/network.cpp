#include "morphnas/network.hpp"

#include <filesystem>
#include <fstream>

#include "morphnas/mten.hpp"

namespace morphnas {

std::string backbone_kind_name(BackboneKind k) {
    switch (k) {
        case BackboneKind::CifarStack: return "cifar-stack";
        case BackboneKind::UnetSearch: return "unet-search";
        case BackboneKind::MultiscaleDecoder: return "multiscale-decoder";
    }
    return "cifar-stack";
}

BackboneKind backbone_kind_from_name(const std::string& s) {
    if (s == "cifar-stack") return BackboneKind::CifarStack;
    if (s == "unet-search") return BackboneKind::UnetSearch;
    if (s == "multiscale-decoder") return BackboneKind::MultiscaleDecoder;
    throw std::invalid_argument("unknown backbone '" + s + "'");
}

namespace {

using F = float;
using VarF = Var<F>;
using Mod = Module<F>;
using ModP = ModulePtr<F>;

struct PassThrough final : Mod {
    VarF forward(const VarF& x, bool) override { return x; }
    void collect_params(std::vector<VarF>&) override {}
};

struct Sequential final : Mod {
    std::vector<ModP> steps;
    VarF forward(const VarF& x, bool training) override {
        VarF y = x;
        for (auto& s : steps) y = s->forward(y, training);
        return y;
    }
    void collect_params(std::vector<VarF>& out) override {
        for (auto& s : steps) s->collect_params(out);
    }
    void collect_buffers(std::vector<std::vector<F>*>& out) override {
        for (auto& s : steps) s->collect_buffers(out);
    }
};

struct ConvBn final : Mod {
    Conv2dLayer<F> conv;
    BatchNorm2dLayer<F> bn;
    bool pre_relu;
    ConvBn(int c_in, int c_out, int k, int stride, int pad, std::mt19937& rng, bool pre_relu_ = false)
        : conv(c_in, c_out, k, stride, pad, rng, false), bn(c_out), pre_relu(pre_relu_) {}
    VarF forward(const VarF& x, bool training) override {
        return bn.forward(conv.forward(pre_relu ? relu(x) : x, training), training);
    }
    void collect_params(std::vector<VarF>& out) override {
        conv.collect_params(out);
        bn.collect_params(out);
    }
    void collect_buffers(std::vector<std::vector<F>*>& out) override { bn.collect_buffers(out); }
};

struct TransposeConvBn final : Mod {
    TransposeConv2dLayer<F> conv;
    BatchNorm2dLayer<F> bn;
    TransposeConvBn(int c_in, int c_out, int k, int stride, int pad, std::mt19937& rng)
        : conv(c_in, c_out, k, stride, pad, rng), bn(c_out) {}
    VarF forward(const VarF& x, bool training) override {
        return bn.forward(conv.forward(relu(x), training), training);
    }
    void collect_params(std::vector<VarF>& out) override {
        conv.collect_params(out);
        bn.collect_params(out);
    }
    void collect_buffers(std::vector<std::vector<F>*>& out) override { bn.collect_buffers(out); }
};

// 3x3 pooling at the given stride; pads by one with the pooling-neutral
// element so the spatial contract matches the convolution ops.
struct PoolOp final : Mod {
    PoolMode mode;
    int stride;
    PoolOp(PoolMode m, int stride_) : mode(m), stride(stride_) {}
    VarF forward(const VarF& x, bool) override {
        const F pad_value = mode == PoolMode::Max ? -std::numeric_limits<F>::infinity()
                            : mode == PoolMode::Min ? std::numeric_limits<F>::infinity()
                                                    : F(0);
        return pool2d(pad2d(x, 1, 1, 1, 1, pad_value), mode, 3, stride);
    }
    void collect_params(std::vector<VarF>&) override {}
};

struct PoolStep final : Mod {  // bare valid pooling, used to stride pseudo ops
    PoolMode mode;
    int k, stride;
    PoolStep(PoolMode m, int k_, int s_) : mode(m), k(k_), stride(s_) {}
    VarF forward(const VarF& x, bool) override { return pool2d(x, mode, k, stride); }
    void collect_params(std::vector<VarF>&) override {}
};

ModP make_pseudo(PseudoVariant variant, int c, std::mt19937& rng) {
    PseudoLayerConfig cfg;
    cfg.variant = variant;
    cfg.r = 3;  // "3x3" op names map to shuffle factor r=3
    cfg.c_in = c;
    return std::make_unique<PseudoLayer<F>>(cfg, rng);
}

// Instantiates a vocabulary op at a given channel count and stride. Strided
// pseudo-morphological ops downsample with the extra stride-2 max-pool step
// (the dilation case is exactly the pseudo-pooling layer).
ModP make_op(const std::string& op, int c, int stride, std::mt19937& rng) {
    if (op == "sep_conv_3x3") return std::make_unique<SepConvLayer<F>>(c, c, 3, stride, rng);
    if (op == "sep_conv_5x5") return std::make_unique<SepConvLayer<F>>(c, c, 5, stride, rng);
    if (op == "conv_3x3") return std::make_unique<ConvBn>(c, c, 3, stride, 1, rng, true);
    if (op == "cweight_3x3") return std::make_unique<CWeightLayer<F>>(c, c, stride, rng);
    if (op == "avg_pool") return std::make_unique<PoolOp>(PoolMode::Avg, stride);
    if (op == "max_pool") return std::make_unique<PoolOp>(PoolMode::Max, stride);
    if (op == "identity") {
        if (stride == 1) return std::make_unique<PassThrough>();
        return std::make_unique<ConvBn>(c, c, 1, stride, 0, rng, true);
    }
    if (op == "transpose_conv") return std::make_unique<TransposeConvBn>(c, c, 3, 1, 1, rng);
    if (op == "pseudo_dilation_3x3") {
        if (stride == 1) return make_pseudo(PseudoVariant::Dilation, c, rng);
        return make_pseudo(PseudoVariant::Pooling, c, rng);
    }
    if (op == "pseudo_erosion_3x3" || op == "pseudo_gradient_3x3") {
        const auto variant =
            op == "pseudo_erosion_3x3" ? PseudoVariant::Erosion : PseudoVariant::Gradient;
        if (stride == 1) return make_pseudo(variant, c, rng);
        auto seq = std::make_unique<Sequential>();
        seq->steps.push_back(make_pseudo(variant, c, rng));
        seq->steps.push_back(std::make_unique<PoolStep>(PoolMode::Max, 2, 2));
        return seq;
    }
    throw std::invalid_argument("unknown op '" + op + "'");
}

// How the two cell inputs are brought to the cell's channel count / resolution.
enum class PrepMode {
    Standard,   // both inputs 1x1-projected at stride 1
    Reduce0,    // input0 is one resolution level above input1: project at stride 2
    UpSample1,  // UpSC: input1 is the lower-resolution decoder state, upsampled 2x
};

struct CellInstance {
    ModP prep0, prep1;
    struct Edge {
        int pred = 0;
        ModP op;
    };
    std::vector<std::pair<Edge, Edge>> nodes;
    std::vector<int> loose;
    int channels = 0;
    int out_channels = 0;

    VarF run(const VarF& in0, const VarF& in1, bool training) {
        std::vector<VarF> states;
        states.push_back(prep0->forward(in0, training));
        states.push_back(prep1->forward(in1, training));
        for (auto& [a, b] : nodes)
            states.push_back(add(a.op->forward(states[a.pred], training),
                                 b.op->forward(states[b.pred], training)));
        std::vector<VarF> outs;
        outs.reserve(loose.size());
        for (int i : loose) outs.push_back(states[i + 2]);
        return outs.size() == 1 ? outs[0] : concat(outs, 1);
    }

    void collect(std::vector<VarF>& params, std::vector<std::vector<F>*>& bufs) {
        prep0->collect_params(params);
        prep0->collect_buffers(bufs);
        prep1->collect_params(params);
        prep1->collect_buffers(bufs);
        for (auto& [a, b] : nodes) {
            a.op->collect_params(params);
            a.op->collect_buffers(bufs);
            b.op->collect_params(params);
            b.op->collect_buffers(bufs);
        }
    }
};

CellInstance make_cell(const CellGraph& g, int c, int c_in0, int c_in1, PrepMode prep,
                       std::mt19937& rng) {
    g.validate();
    const SearchSpace& sp = SearchSpace::by_name(g.space);
    const bool reduction = g.kind == CellKind::Reduction || g.kind == CellKind::DownSC;
    CellInstance inst;
    inst.channels = c;
    inst.prep0 = std::make_unique<ConvBn>(c_in0, c, 1, prep == PrepMode::Reduce0 ? 2 : 1, 0, rng, true);
    if (prep == PrepMode::UpSample1)
        inst.prep1 = std::make_unique<TransposeConvBn>(c_in1, c, 2, 2, 0, rng);
    else
        inst.prep1 = std::make_unique<ConvBn>(c_in1, c, 1, 1, 0, rng, true);
    for (const auto& n : g.nodes) {
        CellInstance::Edge a, b;
        a.pred = n.pred1;
        b.pred = n.pred2;
        const int stride1 = reduction && n.pred1 < 2 ? 2 : 1;
        const int stride2 = reduction && n.pred2 < 2 ? 2 : 1;
        a.op = make_op(sp.ops[n.op1], c, stride1, rng);
        b.op = make_op(sp.ops[n.op2], c, stride2, rng);
        inst.nodes.emplace_back(std::move(a), std::move(b));
    }
    inst.loose = g.loose_end_nodes();
    inst.out_channels = static_cast<int>(inst.loose.size()) * c;
    return inst;
}

// ---- cifar-stack: stem conv -> [N normal, 1 reduction] x 3 -> pool -> classifier ----

class ClassifierNet final : public Network {
public:
    ClassifierNet(const CellGraph& normal, const CellGraph& reduction, const Backbone& bb,
                  std::mt19937& rng)
        : stem_(bb.in_channels, bb.f, 3, 1, 1, rng) {
        int c_pp = bb.f, c_p = bb.f, c = bb.f;
        bool prev_reduced = false;
        for (int block = 0; block < 3; ++block) {
            for (int i = 0; i < bb.n; ++i) {
                cells_.push_back(make_cell(normal, c, c_pp, c_p,
                                           prev_reduced ? PrepMode::Reduce0 : PrepMode::Standard, rng));
                c_pp = c_p;
                c_p = cells_.back().out_channels;
                prev_reduced = false;
            }
            c *= 2;
            cells_.push_back(make_cell(reduction, c, c_pp, c_p,
                                       prev_reduced ? PrepMode::Reduce0 : PrepMode::Standard, rng));
            c_pp = c_p;
            c_p = cells_.back().out_channels;
            prev_reduced = true;
        }
        head_ = std::make_unique<LinearLayer<F>>(c_p, bb.num_classes, rng);
    }

    VarF forward(const VarF& x, bool training) override {
        VarF s = stem_.forward(x, training);
        VarF pp = s, p = s;
        for (auto& cell : cells_) {
            VarF out = cell.run(pp, p, training);
            pp = p;
            p = out;
        }
        last_stage_shape = p->shape;
        return head_->forward(global_avg_pool(relu(p)), training);
    }

    void collect_params(std::vector<VarF>& out) override {
        std::vector<std::vector<F>*> bufs;
        stem_.collect_params(out);
        for (auto& c : cells_) c.collect(out, bufs);
        head_->collect_params(out);
    }

    void collect_buffers(std::vector<std::vector<F>*>& out) override {
        std::vector<VarF> params;
        stem_.collect_buffers(out);
        for (auto& c : cells_) c.collect(params, out);
    }

private:
    ConvBn stem_;
    std::vector<CellInstance> cells_;
    std::unique_ptr<LinearLayer<F>> head_;
};

// ---- unet-search: stride-4 stem, DownSC encoder, UpSC decoder with skips ----

class UnetNet final : public Network {
public:
    UnetNet(const CellGraph& down, const CellGraph& up, const Backbone& bb, std::mt19937& rng,
            unsigned seed)
        : stem1_(bb.in_channels, bb.f, 3, 2, 1, rng),
          stem2_(bb.f, bb.f, 3, 2, 1, rng),
          drop_rng_(seed ^ 0x9e3779b9u) {
        const int f = bb.f;
        down1_ = make_cell(down, 2 * f, f, f, PrepMode::Standard, rng);
        down2_ = make_cell(down, 4 * f, f, down1_.out_channels, PrepMode::Reduce0, rng);
        up1_ = make_cell(up, 2 * f, down1_.out_channels, down2_.out_channels, PrepMode::UpSample1, rng);
        up2_ = make_cell(up, f, f, up1_.out_channels, PrepMode::UpSample1, rng);
        head_ = std::make_unique<Conv2dLayer<F>>(up2_.out_channels, 1, 1, 1, 0, rng);
    }

    VarF forward(const VarF& x, bool training) override {
        auto [n, c, h, w] = detail::as_nchw(x->shape, "unet forward");
        (void)n;
        (void)c;
        if (h % 16 != 0 || w % 16 != 0)
            throw std::invalid_argument("unet-search: input spatial dims must be divisible by 16");
        VarF e0 = relu(stem2_.forward(relu(stem1_.forward(x, training)), training));  // H/4
        VarF d1 = down1_.run(e0, e0, training);                                       // H/8
        VarF d2 = down2_.run(e0, d1, training);                                       // H/16
        VarF u1 = up1_.run(d1, d2, training);                                         // H/8
        VarF u2 = up2_.run(e0, u1, training);                                         // H/4
        last_stage_shape = u2->shape;
        VarF head_in = dropout(relu(u2), F(0.1), training, drop_rng_);  // aux_dropout
        VarF m = head_->forward(head_in, training);
        return sigmoid(upsample_bilinear(m, h, w));
    }

    std::vector<std::pair<std::string, std::pair<int, int>>> stage_sizes(int h, int w) const override {
        return {{"H0", {h / 4, w / 4}}, {"H1", {h / 8, w / 8}}, {"H2", {h / 16, w / 16}}};
    }

    void collect_params(std::vector<VarF>& out) override {
        std::vector<std::vector<F>*> bufs;
        stem1_.collect_params(out);
        stem2_.collect_params(out);
        down1_.collect(out, bufs);
        down2_.collect(out, bufs);
        up1_.collect(out, bufs);
        up2_.collect(out, bufs);
        head_->collect_params(out);
    }

    void collect_buffers(std::vector<std::vector<F>*>& out) override {
        std::vector<VarF> params;
        stem1_.collect_buffers(out);
        stem2_.collect_buffers(out);
        down1_.collect(params, out);
        down2_.collect(params, out);
        up1_.collect(params, out);
        up2_.collect(params, out);
    }

private:
    ConvBn stem1_, stem2_;
    CellInstance down1_, down2_, up1_, up2_;
    std::unique_ptr<Conv2dLayer<F>> head_;
    std::mt19937 drop_rng_;
};

// ---- multiscale-decoder: 4-block residual encoder, one cell per scale ----

class MultiscaleNet final : public Network {
public:
    MultiscaleNet(const CellGraph& cell, const Backbone& bb, std::mt19937& rng) {
        static constexpr int kBlockChannels[4] = {16, 32, 64, 128};
        int c_prev = bb.in_channels;
        for (int i = 0; i < 4; ++i) {
            const int c = kBlockChannels[i];
            down_.push_back(std::make_unique<ConvBn>(c_prev, c, 3, 2, 1, rng));
            res_.push_back(std::make_unique<ConvBn>(c, c, 3, 1, 1, rng));
            s0_.push_back(std::make_unique<ConvBn>(c, 42, 3, 1, 1, rng));
            s1_.push_back(std::make_unique<ConvBn>(42, 42, 3, 1, 1, rng));
            cells_.push_back(make_cell(cell, bb.f, 42, 42, PrepMode::Standard, rng));
            reduce_.push_back(std::make_unique<Conv2dLayer<F>>(cells_.back().out_channels, 1, 1, 1, 0, rng));
            c_prev = c;
        }
        fuse_ = std::make_unique<Conv2dLayer<F>>(4, 1, 1, 1, 0, rng);
    }

    VarF forward(const VarF& x, bool training) override {
        auto [n, c, h, w] = detail::as_nchw(x->shape, "multiscale forward");
        (void)n;
        (void)c;
        if (h % 16 != 0 || w % 16 != 0)
            throw std::invalid_argument("multiscale-decoder: input spatial dims must be divisible by 16");
        VarF feat = x;
        std::vector<VarF> maps;
        for (int i = 0; i < 4; ++i) {
            VarF y = relu(down_[i]->forward(feat, training));
            feat = relu(add(res_[i]->forward(y, training), y));
            VarF s0 = relu(s0_[i]->forward(feat, training));
            VarF s1 = relu(s1_[i]->forward(s0, training));
            VarF cell_out = cells_[i].run(s0, s1, training);
            VarF one = reduce_[i]->forward(relu(cell_out), training);
            maps.push_back(upsample_bilinear(one, h, w));
        }
        VarF fused = concat(maps, 1);
        last_stage_shape = fused->shape;
        return sigmoid(fuse_->forward(fused, training));
    }

    std::vector<std::pair<std::string, std::pair<int, int>>> stage_sizes(int h, int w) const override {
        std::vector<std::pair<std::string, std::pair<int, int>>> out;
        for (int i = 1; i <= 4; ++i)
            out.push_back({"block" + std::to_string(i), {h >> i, w >> i}});
        return out;
    }

    void collect_params(std::vector<VarF>& out) override {
        std::vector<std::vector<F>*> bufs;
        for (int i = 0; i < 4; ++i) {
            down_[i]->collect_params(out);
            res_[i]->collect_params(out);
            s0_[i]->collect_params(out);
            s1_[i]->collect_params(out);
            cells_[i].collect(out, bufs);
            reduce_[i]->collect_params(out);
        }
        fuse_->collect_params(out);
    }

    void collect_buffers(std::vector<std::vector<F>*>& out) override {
        std::vector<VarF> params;
        for (int i = 0; i < 4; ++i) {
            down_[i]->collect_buffers(out);
            res_[i]->collect_buffers(out);
            s0_[i]->collect_buffers(out);
            s1_[i]->collect_buffers(out);
            cells_[i].collect(params, out);
        }
    }

private:
    std::vector<std::unique_ptr<ConvBn>> down_, res_, s0_, s1_;
    std::vector<CellInstance> cells_;
    std::vector<std::unique_ptr<Conv2dLayer<F>>> reduce_;
    std::unique_ptr<Conv2dLayer<F>> fuse_;
};

}  // namespace

BuiltNetwork build_network(const CellGraph& cell_a, const CellGraph& cell_b, const Backbone& backbone,
                           unsigned seed) {
    if (backbone.f < 1 || backbone.n < 1 || backbone.b < 1 || backbone.in_channels < 1)
        throw std::invalid_argument("build_network: shape-infeasible backbone parameters");
    cell_a.validate();
    cell_b.validate();
    if (cell_a.b != backbone.b || cell_b.b != backbone.b)
        throw std::invalid_argument("build_network: cell node count does not match backbone B");
    std::mt19937 rng(seed);
    BuiltNetwork out;
    out.backbone = backbone;
    out.cell_a = cell_a;
    out.cell_b = cell_b;
    switch (backbone.kind) {
        case BackboneKind::CifarStack:
            if (backbone.num_classes < 2)
                throw std::invalid_argument("build_network: classifier needs >= 2 classes");
            out.net = std::make_unique<ClassifierNet>(cell_a, cell_b, backbone, rng);
            break;
        case BackboneKind::UnetSearch: {
            if (cell_b.space != "upsc")
                throw std::invalid_argument("build_network: unet-search expects an upsc-space cell");
            CellGraph down = cell_a, up = cell_b;
            down.kind = CellKind::DownSC;
            up.kind = CellKind::UpSC;
            out.cell_a = down;
            out.cell_b = up;
            out.net = std::make_unique<UnetNet>(down, up, backbone, rng, seed);
            break;
        }
        case BackboneKind::MultiscaleDecoder:
            out.net = std::make_unique<MultiscaleNet>(cell_a, backbone, rng);
            break;
    }
    return out;
}

void save_checkpoint(BuiltNetwork& built, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto params = built.net->parameters();
    auto bufs = built.net->buffers();
    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
    manifest << "backbone=" << backbone_kind_name(built.backbone.kind) << "\n";
    manifest << "n=" << built.backbone.n << "\n";
    manifest << "f=" << built.backbone.f << "\n";
    manifest << "b=" << built.backbone.b << "\n";
    manifest << "in_channels=" << built.backbone.in_channels << "\n";
    manifest << "num_classes=" << built.backbone.num_classes << "\n";
    manifest << "cell_a=" << cell_to_text(built.cell_a) << "\n";
    manifest << "cell_b=" << cell_to_text(built.cell_b) << "\n";
    manifest << "params=" << params.size() << "\n";
    manifest << "buffers=" << bufs.size() << "\n";
    char name[32];
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::snprintf(name, sizeof(name), "param_%04zu.mten", i);
        std::vector<std::uint32_t> dims;
        for (int d : params[i]->shape) dims.push_back(static_cast<std::uint32_t>(d));
        write_mten_f32((fs::path(dir) / name).string(), dims, params[i]->data.data());
    }
    for (std::size_t i = 0; i < bufs.size(); ++i) {
        std::snprintf(name, sizeof(name), "buffer_%04zu.mten", i);
        write_mten_f32((fs::path(dir) / name).string(),
                       {static_cast<std::uint32_t>(bufs[i]->size())}, bufs[i]->data());
    }
}

BuiltNetwork load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("checkpoint: cannot read manifest in " + dir);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("checkpoint: bad manifest line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const char* key : {"backbone", "n", "f", "b", "in_channels", "num_classes", "cell_a",
                            "cell_b", "params", "buffers"})
        if (!kv.count(key)) throw std::runtime_error(std::string("checkpoint: manifest missing ") + key);

    Backbone bb;
    bb.kind = backbone_kind_from_name(kv["backbone"]);
    bb.n = std::stoi(kv["n"]);
    bb.f = std::stoi(kv["f"]);
    bb.b = std::stoi(kv["b"]);
    bb.in_channels = std::stoi(kv["in_channels"]);
    bb.num_classes = std::stoi(kv["num_classes"]);
    BuiltNetwork built = build_network(cell_from_text(kv["cell_a"]), cell_from_text(kv["cell_b"]), bb, 0);

    auto params = built.net->parameters();
    auto bufs = built.net->buffers();
    if (params.size() != static_cast<std::size_t>(std::stoul(kv["params"])) ||
        bufs.size() != static_cast<std::size_t>(std::stoul(kv["buffers"])))
        throw std::runtime_error("checkpoint: tensor count mismatch with manifest");
    char name[32];
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::snprintf(name, sizeof(name), "param_%04zu.mten", i);
        MtenData md = read_mten((fs::path(dir) / name).string());
        if (md.dtype != 1 || md.f32.size() != params[i]->data.size())
            throw std::runtime_error(std::string("checkpoint: shape mismatch in ") + name);
        params[i]->data = md.f32;
    }
    for (std::size_t i = 0; i < bufs.size(); ++i) {
        std::snprintf(name, sizeof(name), "buffer_%04zu.mten", i);
        MtenData md = read_mten((fs::path(dir) / name).string());
        if (md.dtype != 1 || md.f32.size() != bufs[i]->size())
            throw std::runtime_error(std::string("checkpoint: shape mismatch in ") + name);
        *bufs[i] = md.f32;
    }
    return built;
}

}  // namespace morphnas
