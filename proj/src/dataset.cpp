#include "morphnas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "morphnas/morphology.hpp"

namespace morphnas {

namespace {

void render_shape(std::vector<float>& mask, int size, int cls, std::mt19937& rng) {
    std::uniform_int_distribution<int> center(size / 4, 3 * size / 4 - 1);
    const int cy = center(rng), cx = center(rng);
    auto put = [&](int y, int x) {
        if (y >= 0 && y < size && x >= 0 && x < size) mask[static_cast<std::size_t>(y) * size + x] = 1.f;
    };
    switch (cls % 4) {
        case 0: {  // filled box
            std::uniform_int_distribution<int> half(size / 6, size / 3);
            const int hy = half(rng), hx = half(rng);
            for (int y = cy - hy; y <= cy + hy; ++y)
                for (int x = cx - hx; x <= cx + hx; ++x) put(y, x);
            break;
        }
        case 1: {  // disk
            std::uniform_int_distribution<int> rad(size / 6, size / 3);
            const int r = rad(rng);
            for (int y = cy - r; y <= cy + r; ++y)
                for (int x = cx - r; x <= cx + r; ++x)
                    if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) put(y, x);
            break;
        }
        case 2: {  // cross
            std::uniform_int_distribution<int> arm(size / 4, size / 2 - 1);
            std::uniform_int_distribution<int> thick(0, 1);
            const int a = arm(rng), t = thick(rng);
            for (int d = -a; d <= a; ++d)
                for (int w = -t; w <= t; ++w) {
                    put(cy + d, cx + w);
                    put(cy + w, cx + d);
                }
            break;
        }
        default: {  // diagonal stripes
            std::uniform_int_distribution<int> period(3, 5);
            const int p = period(rng);
            std::uniform_int_distribution<int> phase(0, p - 1);
            const int ph = phase(rng);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    if ((y + x + ph) % p == 0) put(y, x);
            break;
        }
    }
}

ClsDataset make_cls_split(std::mt19937& rng, int n, int size, int classes) {
    ClsDataset ds;
    ds.image_size = size;
    ds.num_classes = classes;
    std::uniform_real_distribution<float> bg_dist(0.0f, 0.25f), fg_dist(0.7f, 1.0f);
    std::normal_distribution<float> noise(0.f, 0.05f);
    for (int i = 0; i < n; ++i) {
        const int cls = i % classes;  // balanced
        std::vector<float> mask(static_cast<std::size_t>(size) * size, 0.f);
        render_shape(mask, size, cls, rng);
        const float bg = bg_dist(rng), fg = fg_dist(rng);
        std::vector<float> img(mask.size());
        for (std::size_t p = 0; p < mask.size(); ++p)
            img[p] = bg + (fg - bg) * mask[p] + noise(rng);
        ds.images.push_back(std::move(img));
        ds.labels.push_back(cls);
    }
    return ds;
}

}  // namespace

ClsSplits make_synth_shapes_cls(unsigned seed, int train_n, int val_n, int test_n, int size,
                                int classes) {
    if (classes < 2 || classes > 4) throw std::invalid_argument("synth-shapes-cls: 2..4 classes supported");
    if (size < 8) throw std::invalid_argument("synth-shapes-cls: size too small");
    std::mt19937 rng(seed);
    ClsSplits s;
    s.train = make_cls_split(rng, train_n, size, classes);
    s.val = make_cls_split(rng, val_n, size, classes);
    s.test = make_cls_split(rng, test_n, size, classes);
    return s;
}

ClsSplits make_linear_two_class(unsigned seed, int train_n, int val_n, int test_n, int size) {
    std::mt19937 rng(seed);
    auto make = [&](int n) {
        ClsDataset ds;
        ds.image_size = size;
        ds.num_classes = 2;
        std::normal_distribution<float> noise(0.f, 0.05f);
        for (int i = 0; i < n; ++i) {
            const int cls = i % 2;
            const float level = cls == 0 ? 0.25f : 0.75f;
            std::vector<float> img(static_cast<std::size_t>(size) * size);
            for (auto& p : img) p = level + noise(rng);
            ds.images.push_back(std::move(img));
            ds.labels.push_back(cls);
        }
        return ds;
    };
    ClsSplits s;
    s.train = make(train_n);
    s.val = make(val_n);
    s.test = make(test_n);
    return s;
}

EdgeDataset make_synth_shapes_edge(unsigned seed, int n, int size) {
    if (size % 16 != 0) throw std::invalid_argument("synth-shapes-edge: size must be divisible by 16");
    std::mt19937 rng(seed);
    EdgeDataset ds;
    std::uniform_real_distribution<float> bg_dist(0.05f, 0.2f), fg_dist(0.6f, 0.95f);
    std::normal_distribution<float> noise(0.f, 0.01f);
    std::uniform_int_distribution<int> nshapes(1, 2);
    const auto se_a = StructuringElement::cross(1);
    const auto se_b = StructuringElement::square(1);
    for (int i = 0; i < n; ++i) {
        GrayImage mask(size, size, 0.f);
        const int shapes = nshapes(rng);
        for (int s = 0; s < shapes; ++s) {
            std::vector<float> m(mask.pixels.size(), 0.f);
            render_shape(m, size, s == 0 ? 1 : 0, rng);  // disk, then box
            for (std::size_t p = 0; p < m.size(); ++p) mask.pixels[p] = std::max(mask.pixels[p], m[p]);
        }
        EdgeSample sample;
        sample.id = "edge_" + std::to_string(i);
        sample.image = GrayImage(size, size);
        const float bg = bg_dist(rng), fg = fg_dist(rng);
        for (std::size_t p = 0; p < mask.pixels.size(); ++p)
            sample.image.pixels[p] = bg + (fg - bg) * mask.pixels[p] + noise(rng);
        for (const auto* se : {&se_a, &se_b}) {
            const GrayImage grad = gradients(mask, *se).combined;
            GrayImage gt(size, size);
            for (std::size_t p = 0; p < grad.pixels.size(); ++p)
                gt.pixels[p] = grad.pixels[p] > 0.f ? 1.f : 0.f;
            sample.gts.push_back(std::move(gt));
        }
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

ClsDataset read_cifar10_batches(const std::vector<std::string>& files) {
    ClsDataset ds;
    ds.image_size = 32;
    ds.channels = 3;
    ds.num_classes = 10;
    constexpr std::size_t kRecord = 3073;
    for (const auto& path : files) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cifar10: cannot open " + path);
        std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (buf.empty() || buf.size() % kRecord != 0)
            throw std::runtime_error("cifar10: " + path + " is not a multiple of 3073 bytes");
        for (std::size_t off = 0; off < buf.size(); off += kRecord) {
            const auto label = static_cast<unsigned char>(buf[off]);
            if (label > 9) throw std::runtime_error("cifar10: label out of range in " + path);
            std::vector<float> img(3072);
            for (std::size_t p = 0; p < 3072; ++p)
                img[p] = static_cast<float>(static_cast<unsigned char>(buf[off + 1 + p])) / 255.f;
            ds.images.push_back(std::move(img));
            ds.labels.push_back(label);
        }
    }
    return ds;
}

Var<float> make_batch(const ClsDataset& ds, const std::vector<int>& idx, std::vector<int>& labels_out) {
    if (idx.empty()) throw std::invalid_argument("make_batch: empty index list");
    const int s = ds.image_size, c = ds.channels;
    auto batch = Tensor<float>::create({static_cast<int>(idx.size()), c, s, s});
    labels_out.clear();
    const std::size_t per = static_cast<std::size_t>(c) * s * s;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& img = ds.images.at(static_cast<std::size_t>(idx[i]));
        if (img.size() != per) throw std::invalid_argument("make_batch: image size mismatch");
        std::copy(img.begin(), img.end(), batch->data.begin() + static_cast<std::int64_t>(i * per));
        labels_out.push_back(ds.labels.at(static_cast<std::size_t>(idx[i])));
    }
    return batch;
}

void cutout_batch(Var<float>& batch, int hole, std::mt19937* rng) {
    if (!rng || batch->rank() != 4) return;
    const int n = batch->dim(0), c = batch->dim(1), h = batch->dim(2), w = batch->dim(3);
    std::uniform_int_distribution<int> ypick(0, h - 1), xpick(0, w - 1);
    for (int i = 0; i < n; ++i) {
        const int cy = ypick(*rng), cx = xpick(*rng);
        for (int ch = 0; ch < c; ++ch)
            for (int y = std::max(0, cy - hole / 2); y < std::min(h, cy + hole / 2); ++y)
                for (int x = std::max(0, cx - hole / 2); x < std::min(w, cx + hole / 2); ++x)
                    batch->data[((static_cast<std::int64_t>(i) * c + ch) * h + y) * w + x] = 0.f;
    }
}

}  // namespace morphnas
