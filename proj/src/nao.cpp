#include "morphnas/nao.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "morphnas/layers.hpp"
#include "morphnas/train.hpp"

namespace morphnas {

int SeqSchema::vocab() const {
    if (slots.empty() || b < 1) throw std::invalid_argument("schema: need >= 1 slot and B >= 1");
    int max_ops = 0;
    for (const auto& s : slots)
        max_ops = std::max(max_ops,
                           static_cast<int>(SearchSpace::by_name(s.space).ops.size()));
    return b + 1 + max_ops;
}

std::pair<int, int> SeqSchema::valid_range(int pos) const {
    if (pos < 0 || pos >= length()) throw std::invalid_argument("schema: position out of range");
    const int cell = pos / tokens_per_cell();
    const int within = pos % tokens_per_cell();
    const int node = within / 4;
    const int kind = within % 4;  // 0,2 predecessor; 1,3 op
    if (kind == 0 || kind == 2) return {0, node + 2};
    const int ops = static_cast<int>(SearchSpace::by_name(slots[cell].space).ops.size());
    return {b + 1, b + 1 + ops};
}

TokenSeq SeqSchema::encode(const std::vector<CellGraph>& cells) const {
    if (cells.size() != slots.size())
        throw std::invalid_argument("schema: cell count does not match slot count");
    TokenSeq out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i].b != b || cells[i].space != slots[i].space)
            throw std::invalid_argument("schema: cell does not match slot " + std::to_string(i));
        const TokenSeq part = encode_cell(cells[i]);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

std::vector<CellGraph> SeqSchema::decode(const TokenSeq& seq) const {
    if (static_cast<int>(seq.size()) != length())
        throw std::invalid_argument("schema: sequence length mismatch");
    std::vector<CellGraph> cells;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        TokenSeq part(seq.begin() + static_cast<std::ptrdiff_t>(i) * tokens_per_cell(),
                      seq.begin() + static_cast<std::ptrdiff_t>(i + 1) * tokens_per_cell());
        cells.push_back(decode_cell(part, SearchSpace::by_name(slots[i].space), b, slots[i].kind));
    }
    return cells;
}

bool SeqSchema::is_valid(const TokenSeq& seq) const {
    if (static_cast<int>(seq.size()) != length()) return false;
    for (int p = 0; p < length(); ++p) {
        const auto [lo, hi] = valid_range(p);
        if (seq[p] < lo || seq[p] >= hi) return false;
    }
    return true;
}

namespace {

using D = double;
using VarD = Var<D>;

// Column slice of (N, D) -> (N, to-from); backward scatters into the range.
VarD slice_cols(const VarD& x, int from, int to) {
    const int n = x->dim(0), d = x->dim(1);
    const int w = to - from;
    auto out = morphnas::detail::unary_result(x, morphnas::Shape{n, w});
    for (int i = 0; i < n; ++i)
        std::copy(x->data.begin() + static_cast<std::int64_t>(i) * d + from,
                  x->data.begin() + static_cast<std::int64_t>(i) * d + to,
                  out->data.begin() + static_cast<std::int64_t>(i) * w);
    if (out->requires_grad) {
        Tensor<D>* o = out.get();
        out->backward_fn = [x, o, n, d, w, from] {
            x->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const D* g = o->grad.data() + static_cast<std::int64_t>(i) * w;
                D* xg = x->grad.data() + static_cast<std::int64_t>(i) * d + from;
                for (int j = 0; j < w; ++j) xg[j] += g[j];
            }
        };
    }
    return out;
}

// Row-wise L2 normalization of (N, D); backward projects out the radial part.
VarD l2_normalize_rows(const VarD& x) {
    const int n = x->dim(0), d = x->dim(1);
    auto out = morphnas::detail::unary_result(x, x->shape);
    std::vector<D> norms(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        D s = D(0);
        const D* row = x->data.data() + static_cast<std::int64_t>(i) * d;
        for (int j = 0; j < d; ++j) s += row[j] * row[j];
        norms[static_cast<std::size_t>(i)] = std::sqrt(s) + D(1e-12);
        D* orow = out->data.data() + static_cast<std::int64_t>(i) * d;
        for (int j = 0; j < d; ++j) orow[j] = row[j] / norms[static_cast<std::size_t>(i)];
    }
    if (out->requires_grad) {
        Tensor<D>* o = out.get();
        out->backward_fn = [x, o, norms = std::move(norms), n, d] {
            x->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const D* g = o->grad.data() + static_cast<std::int64_t>(i) * d;
                const D* y = o->data.data() + static_cast<std::int64_t>(i) * d;
                D* xg = x->grad.data() + static_cast<std::int64_t>(i) * d;
                D dot = D(0);
                for (int j = 0; j < d; ++j) dot += g[j] * y[j];
                const D inv = D(1) / norms[static_cast<std::size_t>(i)];
                for (int j = 0; j < d; ++j) xg[j] += (g[j] - dot * y[j]) * inv;
            }
        };
    }
    return out;
}

struct Gru {
    LinearLayer<D> xz, hz, xr, hr, xn, hn;

    Gru(int in, int hidden, std::mt19937& rng)
        : xz(in, hidden, rng), hz(hidden, hidden, rng), xr(in, hidden, rng), hr(hidden, hidden, rng),
          xn(in, hidden, rng), hn(hidden, hidden, rng) {}

    VarD step(const VarD& x, const VarD& h) {
        auto z = sigmoid(add(xz.forward(x, true), hz.forward(h, true)));
        auto r = sigmoid(add(xr.forward(x, true), hr.forward(h, true)));
        auto n = tanh_op(add(xn.forward(x, true), mul(r, hn.forward(h, true))));
        // h' = z*h + (1-z)*n
        auto one = Tensor<D>::from_data(z->shape, std::vector<D>(z->data.size(), D(1)));
        return add(mul(z, h), mul(sub(one, z), n));
    }

    void collect(std::vector<VarD>& out) {
        for (auto* l : {&xz, &hz, &xr, &hr, &xn, &hn}) l->collect_params(out);
    }
};

}  // namespace

struct NaoModel::Impl {
    SeqSchema schema;
    NaoConfig cfg;
    VarD enc_embed, dec_embed;  // (vocab+1, embed); the extra row is BOS
    std::unique_ptr<Gru> encoder, decoder;
    std::unique_ptr<LinearLayer<D>> pred_fc1, pred_fc2, out_proj;
    mutable std::mt19937 drop_rng{0x5eed};

    Impl(SeqSchema schema_, NaoConfig cfg_) : schema(std::move(schema_)), cfg(cfg_) {
        std::mt19937 rng(cfg.seed);
        const int v = schema.vocab();
        enc_embed = Tensor<D>::create({v + 1, cfg.embed}, true);
        dec_embed = Tensor<D>::create({v + 1, cfg.embed}, true);
        init::kaiming_uniform(enc_embed, cfg.embed, rng);
        init::kaiming_uniform(dec_embed, cfg.embed, rng);
        encoder = std::make_unique<Gru>(cfg.embed, cfg.d, rng);
        decoder = std::make_unique<Gru>(cfg.embed, cfg.d, rng);
        pred_fc1 = std::make_unique<LinearLayer<D>>(cfg.d + 2 * cfg.embed, cfg.d, rng);
        pred_fc2 = std::make_unique<LinearLayer<D>>(cfg.d, 1, rng);
        out_proj = std::make_unique<LinearLayer<D>>(cfg.d, v, rng);
    }

    std::vector<VarD> params() {
        std::vector<VarD> out{enc_embed, dec_embed};
        encoder->collect(out);
        decoder->collect(out);
        pred_fc1->collect_params(out);
        pred_fc2->collect_params(out);
        out_proj->collect_params(out);
        return out;
    }

    // Encode a batch of sequences into the latent space: the normalized mean
    // of the recurrent states (consumed by the decoder) concatenated with the
    // normalized mean token embedding. The bag-of-embeddings half carries
    // order-free content statistics, which the performance predictor ranks
    // far more reliably on unseen sequences than a recurrent fingerprint.
    VarD encode_batch(const std::vector<const TokenSeq*>& xs) const {
        const int n = static_cast<int>(xs.size());
        VarD h = Tensor<D>::create({n, cfg.d});
        VarD acc, op_bag, pred_bag;
        for (int t = 0; t < schema.length(); ++t) {
            std::vector<int> ids(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i) ids[i] = (*xs[i])[t];
            auto emb = embedding(enc_embed, ids);
            if (t % 2 == 1)  // op slots
                op_bag = op_bag ? add(op_bag, emb) : emb;
            else  // predecessor slots
                pred_bag = pred_bag ? add(pred_bag, emb) : emb;
            h = encoder->step(emb, h);
            acc = acc ? add(acc, h) : h;
        }
        const D inv_len = D(2) / static_cast<D>(schema.length());
        return concat<D>({l2_normalize_rows(mul_scalar(acc, inv_len / 2)),
                          l2_normalize_rows(mul_scalar(op_bag, inv_len)),
                          l2_normalize_rows(mul_scalar(pred_bag, inv_len))},
                         1);
    }

    int latent_dim() const { return cfg.d + 2 * cfg.embed; }

    VarD predict_batch(const VarD& latent, bool training = false) const {
        VarD in = latent;
        if (training && cfg.latent_dropout > 0)
            in = dropout(in, cfg.latent_dropout, true, drop_rng);
        return sigmoid(pred_fc2->forward(relu(pred_fc1->forward(in, true)), true));
    }

    // Teacher-forced decoder logits per position; gold drives the inputs.
    // The decoder consumes the recurrent half of the latent.
    std::vector<VarD> decode_logits(const VarD& latent, const std::vector<const TokenSeq*>& xs) const {
        VarD h = slice_cols(latent, 0, cfg.d);
        std::vector<VarD> logits;
        logits.reserve(schema.length());
        for (int t = 0; t < schema.length(); ++t) {
            std::vector<int> prev(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i)
                prev[i] = t == 0 ? schema.bos_token() : (*xs[i])[t - 1];
            h = decoder->step(embedding(dec_embed, prev), h);
            logits.push_back(out_proj->forward(h, true));
        }
        return logits;
    }
};

NaoModel::NaoModel(SeqSchema schema, NaoConfig cfg)
    : impl_(std::make_unique<Impl>(std::move(schema), cfg)) {}
NaoModel::~NaoModel() = default;
NaoModel::NaoModel(NaoModel&&) noexcept = default;
NaoModel& NaoModel::operator=(NaoModel&&) noexcept = default;

const SeqSchema& NaoModel::schema() const { return impl_->schema; }
const NaoConfig& NaoModel::config() const { return impl_->cfg; }

NaoTrainStats NaoModel::train(const std::vector<ArchRecord>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("train_nao: empty corpus");
    for (const auto& r : corpus) {
        if (!impl_->schema.is_valid(r.x)) throw std::invalid_argument("train_nao: invalid sequence in corpus");
        if (!std::isfinite(r.score)) throw std::invalid_argument("train_nao: non-finite score");
    }
    auto params = impl_->params();
    AdamOptimizer opt(params, impl_->cfg.lr, 0.9, 0.999, 1e-8, impl_->cfg.weight_decay);
    impl_->drop_rng.seed(impl_->cfg.seed + 77);
    std::mt19937 rng(impl_->cfg.seed + 1);
    std::vector<int> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);

    // Symmetry augmentation: a node's two (pred, op) pairs commute (the node
    // adds the two edge results), so swapping them presents a different
    // sequence of the same architecture with the same score.
    std::bernoulli_distribution coin(0.5);
    bool augment_on = true;
    auto augment = [&](const TokenSeq& x) {
        if (!augment_on) return x;
        TokenSeq out = x;
        for (int node4 = 0; node4 + 3 < static_cast<int>(out.size()); node4 += 4)
            if (coin(rng)) {
                std::swap(out[node4], out[node4 + 2]);
                std::swap(out[node4 + 1], out[node4 + 3]);
            }
        return out;
    };

    NaoTrainStats stats;
    const int length = impl_->schema.length();
    for (int epoch = 0; epoch < impl_->cfg.epochs; ++epoch) {
        // cosine decay to a tenth of the base rate quiets late-epoch jitter;
        // the stochastic pieces (augmentation, dropout) switch off for the
        // final stretch so the objective settles monotonically
        const double frac = impl_->cfg.epochs > 1
                                ? static_cast<double>(epoch) / (impl_->cfg.epochs - 1)
                                : 0.0;
        opt.set_lr(impl_->cfg.lr * (0.04 + 0.48 * (1.0 + std::cos(3.14159265358979 * frac))));
        const bool stochastic = frac < 0.7;
        augment_on = stochastic;
        const double saved_dropout = impl_->cfg.latent_dropout;
        if (!stochastic) impl_->cfg.latent_dropout = 0.0;
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(impl_->cfg.batch)) {
            std::vector<TokenSeq> aug_seqs;
            std::vector<const TokenSeq*> xs, xs_aug;
            std::vector<double> scores;
            for (std::size_t i = start;
                 i < std::min(order.size(), start + static_cast<std::size_t>(impl_->cfg.batch)); ++i) {
                xs.push_back(&corpus[static_cast<std::size_t>(order[i])].x);
                aug_seqs.push_back(augment(corpus[static_cast<std::size_t>(order[i])].x));
                scores.push_back(corpus[static_cast<std::size_t>(order[i])].score);
            }
            for (const auto& seq : aug_seqs) xs_aug.push_back(&seq);
            const int n = static_cast<int>(xs.size());
            opt.zero_grad();
            // The predictor branch sees a random symmetry variant (same
            // architecture, same score); the decoder reconstructs the
            // original sequence.
            auto latent_aug = impl_->encode_batch(xs_aug);
            auto pred = impl_->predict_batch(latent_aug, true);  // (n, 1)
            auto target = Tensor<D>::from_data({n, 1}, std::vector<D>(scores.begin(), scores.end()));
            auto diff = sub(pred, target);
            auto pred_loss = mean(mul(diff, diff));

            auto latent = impl_->encode_batch(xs);
            auto logits = impl_->decode_logits(latent, xs);
            VarD recon;
            for (int t = 0; t < length; ++t) {
                std::vector<int> gold(xs.size());
                for (std::size_t i = 0; i < xs.size(); ++i) gold[i] = (*xs[i])[t];
                auto ce = softmax_cross_entropy(logits[static_cast<std::size_t>(t)], gold);
                recon = recon ? add(recon, ce) : ce;
            }
            recon = mul_scalar(recon, D(1) / static_cast<D>(length));
            auto loss = add(pred_loss, mul_scalar(recon, static_cast<D>(impl_->cfg.lambda)));
            if (!std::isfinite(loss->data[0]))
                throw std::runtime_error("train_nao: NaN loss at epoch " + std::to_string(epoch));
            backward(loss);
            opt.step();
            // The recorded curve is the objective on the training corpus
            // itself (original sequences, no dropout), so the monotonicity
            // contract is not clouded by augmentation sampling noise.
            double batch_obj;
            {
                auto pred_orig = impl_->predict_batch(latent, false);
                double mse = 0;
                for (int i = 0; i < n; ++i) {
                    const double d2 = pred_orig->data[i] - scores[static_cast<std::size_t>(i)];
                    mse += d2 * d2;
                }
                batch_obj = mse / n + impl_->cfg.lambda * recon->data[0];
            }
            epoch_loss += batch_obj * n;
            seen += static_cast<std::size_t>(n);
        }
        impl_->cfg.latent_dropout = saved_dropout;
        epoch_loss /= static_cast<double>(seen);
        if (!stats.epoch_loss.empty() && epoch_loss > stats.epoch_loss.back())
            ++stats.non_monotone_epochs;
        stats.epoch_loss.push_back(epoch_loss);
    }
    return stats;
}

std::vector<double> NaoModel::encode(const TokenSeq& x) const {
    if (!impl_->schema.is_valid(x)) throw std::invalid_argument("encode: invalid sequence");
    auto latent = impl_->encode_batch({&x});
    return std::vector<double>(latent->data.begin(), latent->data.end());
}

double NaoModel::predict(const std::vector<double>& latent) const {
    if (static_cast<int>(latent.size()) != impl_->latent_dim())
        throw std::invalid_argument("predict: latent dimension mismatch");
    auto e = Tensor<D>::from_data({1, impl_->latent_dim()}, latent);
    return impl_->predict_batch(e)->data[0];
}

std::vector<double> NaoModel::ascend(const std::vector<double>& latent, double eta, int steps) const {
    std::vector<double> e = latent;
    for (int s = 0; s < steps; ++s) {
        auto leaf = Tensor<D>::from_data({1, impl_->latent_dim()}, e, true);
        auto p = impl_->predict_batch(leaf);
        backward(p);
        for (std::size_t i = 0; i < e.size(); ++i) e[i] += eta * leaf->grad[i];
    }
    return e;
}

TokenSeq NaoModel::decode(const std::vector<double>& latent) const {
    VarD h = Tensor<D>::from_data(
        {1, impl_->cfg.d},
        std::vector<double>(latent.begin(), latent.begin() + impl_->cfg.d));
    TokenSeq out;
    int prev = impl_->schema.bos_token();
    for (int t = 0; t < impl_->schema.length(); ++t) {
        h = impl_->decoder->step(embedding(impl_->dec_embed, {prev}), h);
        auto logits = impl_->out_proj->forward(h, true);
        const auto [lo, hi] = impl_->schema.valid_range(t);
        int best = lo;
        for (int v = lo + 1; v < hi; ++v)
            if (logits->data[v] > logits->data[best]) best = v;
        out.push_back(best);
        prev = best;
    }
    return out;
}

double NaoModel::reconstruction_accuracy(const std::vector<ArchRecord>& corpus) const {
    if (corpus.empty()) throw std::invalid_argument("reconstruction_accuracy: empty corpus");
    std::vector<const TokenSeq*> xs;
    for (const auto& r : corpus) xs.push_back(&r.x);
    auto latent = impl_->encode_batch(xs);
    auto logits = impl_->decode_logits(latent, xs);
    const int v = impl_->schema.vocab();
    std::int64_t hit = 0, total = 0;
    for (int t = 0; t < impl_->schema.length(); ++t) {
        const auto& l = logits[static_cast<std::size_t>(t)];
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const D* row = l->data.data() + static_cast<std::int64_t>(i) * v;
            int best = 0;
            for (int j = 1; j < v; ++j)
                if (row[j] > row[best]) best = j;
            hit += best == (*xs[i])[t];
            ++total;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

GeneratedCandidates generate_candidates(const NaoModel& model, const std::vector<ArchRecord>& seeds,
                                        double eta, int steps, int k) {
    GeneratedCandidates out;
    out.seeds = static_cast<int>(seeds.size());
    std::set<TokenSeq> unique;
    for (const auto& seed : seeds) {
        const auto e = model.encode(seed.x);
        const auto e2 = model.ascend(e, eta, steps);
        if (model.predict(e2) >= model.predict(e)) ++out.improved;
        TokenSeq decoded = model.decode(e2);
        if (!model.schema().is_valid(decoded)) {
            ++out.discarded;
            continue;
        }
        try {
            model.schema().decode(decoded);  // full cell validation
        } catch (const std::exception&) {
            ++out.discarded;
            continue;
        }
        if (static_cast<int>(unique.size()) < k) unique.insert(std::move(decoded));
    }
    out.sequences.assign(unique.begin(), unique.end());
    return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("spearman: need two equal-length series of size >= 2");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<int> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int i, int j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < idx.size()) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0 || vb == 0) return 0.0;
    return cov / std::sqrt(va * vb);
}

}  // namespace morphnas
