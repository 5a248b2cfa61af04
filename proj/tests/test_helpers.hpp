// Shared helpers for the test suites: random tensors and brute-force oracles
// kept independent of the library's execution paths.
#pragma once

#include <random>
#include <vector>

#include "morphnas/image.hpp"
#include "morphnas/ops.hpp"

namespace testutil {

template <typename T>
morphnas::Var<T> random_var(morphnas::Shape shape, std::mt19937& rng, T lo = T(-1), T hi = T(1),
                            bool req_grad = false) {
    auto t = morphnas::Tensor<T>::create(std::move(shape), req_grad);
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& v : t->data) v = static_cast<T>(dist(rng));
    return t;
}

inline morphnas::GrayImage random_image(int h, int w, std::mt19937& rng, float lo = 0.f,
                                        float hi = 1.f) {
    morphnas::GrayImage img(h, w);
    std::uniform_real_distribution<float> dist(lo, hi);
    for (auto& p : img.pixels) p = dist(rng);
    return img;
}

inline morphnas::GrayImage random_int_image(int h, int w, std::mt19937& rng, int lo = -8,
                                            int hi = 8) {
    morphnas::GrayImage img(h, w);
    std::uniform_int_distribution<int> dist(lo, hi);
    for (auto& p : img.pixels) p = static_cast<float>(dist(rng));
    return img;
}

// Direct nested-loop convolution, the definitional oracle.
template <typename T>
std::vector<T> conv_oracle(const std::vector<T>& x, int n, int ci, int h, int w,
                           const std::vector<T>& wt, int co, int kh, int kw,
                           const std::vector<T>& bias, int stride, int pad) {
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w + 2 * pad - kw) / stride + 1;
    std::vector<T> out(static_cast<std::size_t>(n) * co * oh * ow, T(0));
    for (int ni = 0; ni < n; ++ni)
        for (int oc = 0; oc < co; ++oc)
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) {
                    T acc = bias.empty() ? T(0) : bias[oc];
                    for (int ic = 0; ic < ci; ++ic)
                        for (int u = 0; u < kh; ++u)
                            for (int v = 0; v < kw; ++v) {
                                const int iy = y * stride - pad + u;
                                const int ix = xo * stride - pad + v;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += x[((static_cast<std::size_t>(ni) * ci + ic) * h + iy) * w + ix] *
                                       wt[((static_cast<std::size_t>(oc) * ci + ic) * kh + u) * kw + v];
                            }
                    out[((static_cast<std::size_t>(ni) * co + oc) * oh + y) * ow + xo] = acc;
                }
    return out;
}

}  // namespace testutil
