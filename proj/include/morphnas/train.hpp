// Optimizers and the desk-scale training loops.
#pragma once

#include <functional>

#include "morphnas/dataset.hpp"
#include "morphnas/network.hpp"

namespace morphnas {

struct SgdConfig {
    double lr = 0.025;
    double momentum = 0.9;
    double weight_decay = 3e-4;
    int batch = 32;
    int epochs = 1;
    bool cosine = true;   // cosine-annealed lr over epochs
    bool cutout = false;  // optional 8x8 random erase
    unsigned seed = 0;
};

// SGD with momentum and weight decay.
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<Var<float>> params, const SgdConfig& cfg);
    void zero_grad();
    void step(double lr);
    double lr_at_epoch(int epoch) const;

private:
    std::vector<Var<float>> params_;
    std::vector<std::vector<float>> velocity_;
    SgdConfig cfg_;
};

// Adam over double tensors (the NAO surrogate trains in 64-bit).
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Var<double>> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0);
    void zero_grad();
    void step();
    void set_lr(double lr) { lr_ = lr; }

private:
    std::vector<Var<double>> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_, weight_decay_;
    long t_ = 0;
};

struct TrainCurve {
    std::vector<double> train_loss;  // per epoch
    std::vector<double> train_err;
    std::vector<double> val_err;
};

// Cross-entropy SGD training; deterministic per cfg.seed. Throws on NaN loss,
// naming the epoch. epochs == 0 leaves the network untouched.
TrainCurve train_classifier(Network& net, const ClsSplits& data, const SgdConfig& cfg);

double classifier_error(Network& net, const ClsDataset& ds, int batch = 64);

// Per-image binary cross-entropy training for edge networks; targets are the
// union of the annotator maps.
TrainCurve train_edge(Network& net, const EdgeDataset& train, const SgdConfig& cfg);

}  // namespace morphnas
