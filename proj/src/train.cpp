#include "morphnas/train.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace morphnas {

SgdOptimizer::SgdOptimizer(std::vector<Var<float>> params, const SgdConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
    velocity_.reserve(params_.size());
    for (const auto& p : params_) velocity_.emplace_back(p->data.size(), 0.f);
}

void SgdOptimizer::zero_grad() {
    for (auto& p : params_) {
        p->ensure_grad();
        p->zero_grad();
    }
}

void SgdOptimizer::step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        auto& v = velocity_[i];
        const float wd = static_cast<float>(cfg_.weight_decay);
        const float mom = static_cast<float>(cfg_.momentum);
        for (std::size_t j = 0; j < p->data.size(); ++j) {
            const float g = p->grad[j] + wd * p->data[j];
            v[j] = mom * v[j] + g;
            p->data[j] -= static_cast<float>(lr) * v[j];
        }
    }
}

double SgdOptimizer::lr_at_epoch(int epoch) const {
    if (!cfg_.cosine || cfg_.epochs <= 1) return cfg_.lr;
    return cfg_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / cfg_.epochs));
}

AdamOptimizer::AdamOptimizer(std::vector<Var<double>> params, double lr, double beta1, double beta2,
                             double eps, double weight_decay)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      weight_decay_(weight_decay) {
    for (const auto& p : params_) {
        m_.emplace_back(p->data.size(), 0.0);
        v_.emplace_back(p->data.size(), 0.0);
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& p : params_) {
        p->ensure_grad();
        p->zero_grad();
    }
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        for (std::size_t j = 0; j < p->data.size(); ++j) {
            const double g = p->grad[j];
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
            p->data[j] -= lr_ * ((m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_) +
                                 weight_decay_ * p->data[j]);
        }
    }
}

namespace {

double batch_error(const Var<float>& logits, const std::vector<int>& labels) {
    const int n = logits->dim(0), k = logits->dim(1);
    int wrong = 0;
    for (int i = 0; i < n; ++i) {
        const float* row = logits->data.data() + static_cast<std::int64_t>(i) * k;
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;
        if (best != labels[i]) ++wrong;
    }
    return static_cast<double>(wrong) / n;
}

}  // namespace

double classifier_error(Network& net, const ClsDataset& ds, int batch) {
    if (ds.size() == 0) throw std::invalid_argument("classifier_error: empty dataset");
    std::int64_t wrong = 0;
    for (std::size_t start = 0; start < ds.size(); start += batch) {
        std::vector<int> idx;
        for (std::size_t i = start; i < std::min(ds.size(), start + batch); ++i)
            idx.push_back(static_cast<int>(i));
        std::vector<int> labels;
        auto x = make_batch(ds, idx, labels);
        auto logits = net.forward(x, false);
        wrong += static_cast<std::int64_t>(std::lround(batch_error(logits, labels) * idx.size()));
    }
    return static_cast<double>(wrong) / static_cast<double>(ds.size());
}

TrainCurve train_classifier(Network& net, const ClsSplits& data, const SgdConfig& cfg) {
    TrainCurve curve;
    if (cfg.epochs == 0) return curve;
    if (data.train.size() == 0) throw std::invalid_argument("train_classifier: empty training split");
    SgdOptimizer opt(net.parameters(), cfg);
    std::mt19937 rng(cfg.seed);
    std::vector<int> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = opt.lr_at_epoch(epoch);
        double loss_sum = 0.0;
        std::int64_t wrong = 0, seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::vector<int> idx(order.begin() + start,
                                 order.begin() + std::min(order.size(), start + cfg.batch));
            std::vector<int> labels;
            auto x = make_batch(data.train, idx, labels);
            if (cfg.cutout) cutout_batch(x, 8, &rng);
            opt.zero_grad();
            auto logits = net.forward(x, true);
            auto loss = softmax_cross_entropy(logits, labels);
            const double lv = loss->data[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("train_classifier: loss diverged (NaN) at epoch " +
                                         std::to_string(epoch));
            backward(loss);
            opt.step(lr);
            loss_sum += lv * idx.size();
            wrong += static_cast<std::int64_t>(std::lround(batch_error(logits, labels) * idx.size()));
            seen += static_cast<std::int64_t>(idx.size());
        }
        curve.train_loss.push_back(loss_sum / static_cast<double>(seen));
        curve.train_err.push_back(static_cast<double>(wrong) / static_cast<double>(seen));
        curve.val_err.push_back(data.val.size() ? classifier_error(net, data.val) : 0.0);
    }
    return curve;
}

TrainCurve train_edge(Network& net, const EdgeDataset& train, const SgdConfig& cfg) {
    TrainCurve curve;
    if (cfg.epochs == 0) return curve;
    if (train.samples.empty()) throw std::invalid_argument("train_edge: empty dataset");
    SgdOptimizer opt(net.parameters(), cfg);
    std::mt19937 rng(cfg.seed);
    std::vector<int> order(train.samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = opt.lr_at_epoch(epoch);
        double loss_sum = 0.0;
        for (int si : order) {
            const EdgeSample& s = train.samples[static_cast<std::size_t>(si)];
            auto x = Tensor<float>::create({1, 1, s.image.height, s.image.width});
            x->data.assign(s.image.pixels.begin(), s.image.pixels.end());
            std::vector<float> target(s.image.pixels.size(), 0.f);
            for (const auto& gt : s.gts)
                for (std::size_t p = 0; p < target.size(); ++p)
                    if (gt.pixels[p] > 0.f) target[p] = 1.f;
            opt.zero_grad();
            auto pred = net.forward(x, true);
            auto loss = binary_cross_entropy(pred, target);
            const double lv = loss->data[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("train_edge: loss diverged (NaN) at epoch " +
                                         std::to_string(epoch));
            backward(loss);
            opt.step(lr);
            loss_sum += lv;
        }
        curve.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    }
    return curve;
}

}  // namespace morphnas
