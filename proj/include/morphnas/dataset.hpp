// Synthetic desk-scale datasets plus the CIFAR-10 binary-batch ingest.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "morphnas/image.hpp"
#include "morphnas/tensor.hpp"

namespace morphnas {

struct ClsDataset {
    int image_size = 0;
    int channels = 1;
    int num_classes = 0;
    std::vector<std::vector<float>> images;  // flattened channels*size*size
    std::vector<int> labels;

    std::size_t size() const { return images.size(); }
};

struct ClsSplits {
    ClsDataset train, val, test;
};

// Four-class shape classification (filled box, disk, cross, stripes) with
// jittered geometry, random fore/background levels and Gaussian noise.
// Deterministic per seed; the three splits are generated independently.
ClsSplits make_synth_shapes_cls(unsigned seed, int train_n, int val_n, int test_n,
                                int size = 16, int classes = 4);

// Two-class set that is linearly separable by mean intensity.
ClsSplits make_linear_two_class(unsigned seed, int train_n, int val_n, int test_n, int size = 8);

struct EdgeSample {
    std::string id;
    GrayImage image;
    std::vector<GrayImage> gts;  // binary annotation maps (multiple annotators)
};

struct EdgeDataset {
    std::vector<EdgeSample> samples;
};

// Shape images whose ground-truth edges are exact morphological gradients of
// the underlying binary mask (one annotation per gradient SE).
EdgeDataset make_synth_shapes_edge(unsigned seed, int n, int size = 64);

// Standard CIFAR-10 binary batches: 3073-byte records (1 label + 3072 pixels).
ClsDataset read_cifar10_batches(const std::vector<std::string>& files);

// Assemble (N,C,S,S) batch tensor + labels for the given sample indices.
Var<float> make_batch(const ClsDataset& ds, const std::vector<int>& idx, std::vector<int>& labels_out);

// Optional 8x8 random-erase augmentation (Cutout-style), in place on a batch.
void cutout_batch(Var<float>& batch, int hole = 8, std::mt19937* rng = nullptr);

}  // namespace morphnas
