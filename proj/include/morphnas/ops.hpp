// Spatial and NN operations on 3-d (C,H,W) / 4-d (N,C,H,W) tensors.
#pragma once

#include <array>
#include <limits>
#include <random>

#include "morphnas/tensor.hpp"

namespace morphnas {

enum class PoolMode { Max, Min, Avg };

namespace detail {

// Output-index range [lo, hi) for which in = out*stride - pad + k stays
// inside [0, limit); keeps bounds checks out of convolution inner loops.
inline std::pair<int, int> conv_span(int out_size, int stride, int pad, int k, int limit) {
    int lo = 0;
    if (pad > k) lo = (pad - k + stride - 1) / stride;
    int hi = out_size;
    const int max_in = limit - 1 + pad - k;
    if (max_in < 0) return {0, 0};
    hi = std::min(hi, max_in / stride + 1);
    return {lo, std::max(lo, hi)};
}

// Treat (C,H,W) as batch of one. Returns (n, c, h, w).
inline std::array<int, 4> as_nchw(const Shape& s, const char* op) {
    if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
    if (s.size() == 3) return {1, s[0], s[1], s[2]};
    throw std::invalid_argument(std::string(op) + ": expects 3-d or 4-d input, got " + shape_str(s));
}

inline Shape like_rank(const Shape& in, int c, int h, int w) {
    if (in.size() == 4) return {in[0], c, h, w};
    return {c, h, w};
}

}  // namespace detail

// Cross-correlation with zero padding, optional grouping (groups == C_in gives
// a depthwise convolution). w: (C_out, C_in/groups, kh, kw), b: (C_out) or null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride = 1, int pad = 0,
              int groups = 1) {
    auto [n, ci, h, wd] = detail::as_nchw(x->shape, "conv2d");
    if (w->rank() != 4) throw std::invalid_argument("conv2d: weight must be 4-d");
    const int co = w->dim(0), wci = w->dim(1), kh = w->dim(2), kw = w->dim(3);
    if (stride < 1 || pad < 0 || groups < 1) throw std::invalid_argument("conv2d: bad stride/pad/groups");
    if (ci % groups != 0 || co % groups != 0)
        throw std::invalid_argument("conv2d: channels not divisible by groups");
    if (wci != ci / groups)
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(wci) +
                                    " input channels per group, input has " + std::to_string(ci / groups));
    if (b && (b->rank() != 1 || b->dim(0) != co)) throw std::invalid_argument("conv2d: bad bias shape");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    if (h + 2 * pad < kh || wd + 2 * pad < kw)
        throw std::invalid_argument("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                    " larger than padded input " + shape_str(x->shape));

    auto out = Tensor<T>::create(detail::like_rank(x->shape, co, oh, ow));
    out->requires_grad = x->requires_grad || w->requires_grad || (b && b->requires_grad);
    if (out->requires_grad) {
        out->parents = {x, w};
        if (b) out->parents.push_back(b);
    }

    const int cig = ci / groups, cog = co / groups;
    const std::int64_t xs_c = static_cast<std::int64_t>(h) * wd;
    const std::int64_t os_c = static_cast<std::int64_t>(oh) * ow;
    for (int ni = 0; ni < n; ++ni) {
        const T* xn = x->data.data() + static_cast<std::int64_t>(ni) * ci * xs_c;
        T* on = out->data.data() + static_cast<std::int64_t>(ni) * co * os_c;
        for (int oc = 0; oc < co; ++oc) {
            T* oc_ptr = on + oc * os_c;
            if (b) {
                for (std::int64_t i = 0; i < os_c; ++i) oc_ptr[i] = b->data[oc];
            }
            const int g = oc / cog;
            for (int icg = 0; icg < cig; ++icg) {
                const int icx = g * cig + icg;
                const T* xc = xn + icx * xs_c;
                const T* wc = w->data.data() +
                              ((static_cast<std::int64_t>(oc) * cig + icg) * kh) * kw;
                for (int u = 0; u < kh; ++u) {
                    const auto [y_lo, y_hi] = detail::conv_span(oh, stride, pad, u, h);
                    for (int v = 0; v < kw; ++v) {
                        const T wv = wc[u * kw + v];
                        if (wv == T(0)) continue;
                        const auto [x_lo, x_hi] = detail::conv_span(ow, stride, pad, v, wd);
                        for (int y = y_lo; y < y_hi; ++y) {
                            const int iy = y * stride - pad + u;
                            const T* xrow = xc + static_cast<std::int64_t>(iy) * wd;
                            T* orow = oc_ptr + static_cast<std::int64_t>(y) * ow;
                            if (stride == 1) {
                                const int off = v - pad;
                                for (int xo = x_lo; xo < x_hi; ++xo) orow[xo] += wv * xrow[xo + off];
                            } else {
                                for (int xo = x_lo; xo < x_hi; ++xo)
                                    orow[xo] += wv * xrow[xo * stride - pad + v];
                            }
                        }
                    }
                }
            }
        }
    }

    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, w, b, o, n, ci, h, wd, co, kh, kw, oh, ow, stride, pad, cig, cog] {
            if (x->requires_grad) x->ensure_grad();
            if (w->requires_grad) w->ensure_grad();
            if (b && b->requires_grad) b->ensure_grad();
            const std::int64_t xs_c = static_cast<std::int64_t>(h) * wd;
            const std::int64_t os_c = static_cast<std::int64_t>(oh) * ow;
            for (int ni = 0; ni < n; ++ni) {
                const T* xn = x->data.data() + static_cast<std::int64_t>(ni) * ci * xs_c;
                T* xgn = x->requires_grad ? x->grad.data() + static_cast<std::int64_t>(ni) * ci * xs_c : nullptr;
                const T* gn = o->grad.data() + static_cast<std::int64_t>(ni) * co * os_c;
                for (int oc = 0; oc < co; ++oc) {
                    const T* gc = gn + oc * os_c;
                    if (b && b->requires_grad) {
                        T acc = T(0);
                        for (std::int64_t i = 0; i < os_c; ++i) acc += gc[i];
                        b->grad[oc] += acc;
                    }
                    const int g = oc / cog;
                    for (int icg = 0; icg < cig; ++icg) {
                        const int icx = g * cig + icg;
                        const T* xc = xn + icx * xs_c;
                        T* xgc = xgn ? xgn + icx * xs_c : nullptr;
                        const std::int64_t wbase = (static_cast<std::int64_t>(oc) * cig + icg) * kh * kw;
                        for (int u = 0; u < kh; ++u) {
                            const auto [y_lo, y_hi] = detail::conv_span(oh, stride, pad, u, h);
                            for (int v = 0; v < kw; ++v) {
                                const T wv = w->data[wbase + u * kw + v];
                                const auto [x_lo, x_hi] = detail::conv_span(ow, stride, pad, v, wd);
                                T wg = T(0);
                                for (int y = y_lo; y < y_hi; ++y) {
                                    const int iy = y * stride - pad + u;
                                    const T* grow = gc + static_cast<std::int64_t>(y) * ow;
                                    const T* xrow = xc + static_cast<std::int64_t>(iy) * wd;
                                    T* xgrow = xgc ? xgc + static_cast<std::int64_t>(iy) * wd : nullptr;
                                    if (stride == 1) {
                                        const int off = v - pad;
                                        if (xgrow) {
                                            for (int xo = x_lo; xo < x_hi; ++xo) {
                                                const T g2 = grow[xo];
                                                wg += g2 * xrow[xo + off];
                                                xgrow[xo + off] += g2 * wv;
                                            }
                                        } else {
                                            for (int xo = x_lo; xo < x_hi; ++xo)
                                                wg += grow[xo] * xrow[xo + off];
                                        }
                                    } else {
                                        for (int xo = x_lo; xo < x_hi; ++xo) {
                                            const int ix = xo * stride - pad + v;
                                            const T g2 = grow[xo];
                                            wg += g2 * xrow[ix];
                                            if (xgrow) xgrow[ix] += g2 * wv;
                                        }
                                    }
                                }
                                if (w->requires_grad) w->grad[wbase + u * kw + v] += wg;
                            }
                        }
                    }
                }
            }
        };
    }
    return out;
}

// Transposed convolution. w: (C_in, C_out, kh, kw); out = (H-1)*stride - 2*pad + kh.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride = 1,
                        int pad = 0) {
    auto [n, ci, h, wd] = detail::as_nchw(x->shape, "conv_transpose2d");
    if (w->rank() != 4 || w->dim(0) != ci)
        throw std::invalid_argument("conv_transpose2d: weight must be (C_in, C_out, kh, kw)");
    const int co = w->dim(1), kh = w->dim(2), kw = w->dim(3);
    const int oh = (h - 1) * stride - 2 * pad + kh;
    const int ow = (wd - 1) * stride - 2 * pad + kw;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv_transpose2d: non-positive output size");
    if (b && (b->rank() != 1 || b->dim(0) != co)) throw std::invalid_argument("conv_transpose2d: bad bias");

    auto out = Tensor<T>::create(detail::like_rank(x->shape, co, oh, ow));
    out->requires_grad = x->requires_grad || w->requires_grad || (b && b->requires_grad);
    if (out->requires_grad) {
        out->parents = {x, w};
        if (b) out->parents.push_back(b);
    }
    const std::int64_t xs_c = static_cast<std::int64_t>(h) * wd;
    const std::int64_t os_c = static_cast<std::int64_t>(oh) * ow;
    for (int ni = 0; ni < n; ++ni) {
        const T* xn = x->data.data() + static_cast<std::int64_t>(ni) * ci * xs_c;
        T* on = out->data.data() + static_cast<std::int64_t>(ni) * co * os_c;
        if (b)
            for (int oc = 0; oc < co; ++oc)
                for (std::int64_t i = 0; i < os_c; ++i) on[oc * os_c + i] = b->data[oc];
        for (int ic = 0; ic < ci; ++ic) {
            const T* xc = xn + ic * xs_c;
            for (int oc = 0; oc < co; ++oc) {
                const T* wc = w->data.data() + ((static_cast<std::int64_t>(ic) * co + oc) * kh) * kw;
                T* ocp = on + oc * os_c;
                for (int y = 0; y < h; ++y)
                    for (int xi = 0; xi < wd; ++xi) {
                        const T xv = xc[y * wd + xi];
                        if (xv == T(0)) continue;
                        for (int u = 0; u < kh; ++u) {
                            const int oy = y * stride - pad + u;
                            if (oy < 0 || oy >= oh) continue;
                            for (int v = 0; v < kw; ++v) {
                                const int ox = xi * stride - pad + v;
                                if (ox < 0 || ox >= ow) continue;
                                ocp[static_cast<std::int64_t>(oy) * ow + ox] += xv * wc[u * kw + v];
                            }
                        }
                    }
            }
        }
    }
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, w, b, o, n, ci, h, wd, co, kh, kw, oh, ow, stride, pad] {
            if (x->requires_grad) x->ensure_grad();
            if (w->requires_grad) w->ensure_grad();
            if (b && b->requires_grad) b->ensure_grad();
            const std::int64_t xs_c = static_cast<std::int64_t>(h) * wd;
            const std::int64_t os_c = static_cast<std::int64_t>(oh) * ow;
            for (int ni = 0; ni < n; ++ni) {
                const T* xn = x->data.data() + static_cast<std::int64_t>(ni) * ci * xs_c;
                T* xgn = x->requires_grad ? x->grad.data() + static_cast<std::int64_t>(ni) * ci * xs_c : nullptr;
                const T* gn = o->grad.data() + static_cast<std::int64_t>(ni) * co * os_c;
                if (b && b->requires_grad)
                    for (int oc = 0; oc < co; ++oc) {
                        T acc = T(0);
                        for (std::int64_t i = 0; i < os_c; ++i) acc += gn[oc * os_c + i];
                        b->grad[oc] += acc;
                    }
                for (int ic = 0; ic < ci; ++ic) {
                    const T* xc = xn + ic * xs_c;
                    T* xgc = xgn ? xgn + ic * xs_c : nullptr;
                    for (int oc = 0; oc < co; ++oc) {
                        const std::int64_t wbase = (static_cast<std::int64_t>(ic) * co + oc) * kh * kw;
                        const T* gc = gn + oc * os_c;
                        for (int y = 0; y < h; ++y)
                            for (int xi = 0; xi < wd; ++xi) {
                                const T xv = xc[y * wd + xi];
                                T xg = T(0);
                                for (int u = 0; u < kh; ++u) {
                                    const int oy = y * stride - pad + u;
                                    if (oy < 0 || oy >= oh) continue;
                                    for (int v = 0; v < kw; ++v) {
                                        const int ox = xi * stride - pad + v;
                                        if (ox < 0 || ox >= ow) continue;
                                        const T g2 = gc[static_cast<std::int64_t>(oy) * ow + ox];
                                        xg += g2 * w->data[wbase + u * kw + v];
                                        if (w->requires_grad) w->grad[wbase + u * kw + v] += g2 * xv;
                                    }
                                }
                                if (xgc) xgc[y * wd + xi] += xg;
                            }
                    }
                }
            }
        };
    }
    return out;
}

namespace detail {

template <typename T>
Var<T> pool2d_impl(const Var<T>& x, PoolMode mode, int k, int stride, int anchor, int oh, int ow) {
    auto [n, c, h, wd] = as_nchw(x->shape, "pool2d");
    auto out = unary_result(x, like_rank(x->shape, c, oh, ow));
    const std::int64_t plane = static_cast<std::int64_t>(h) * wd;
    const std::int64_t oplane = static_cast<std::int64_t>(oh) * ow;
    const bool extremum = mode != PoolMode::Avg;
    // For max/min, remember the first attaining element (row-major window scan).
    std::vector<std::int32_t> arg(extremum && out->requires_grad ? out->data.size() : 0, -1);

    // Window extents, clipped at the bottom/right edge (anchored pooling only
    // overhangs there; anchor >= 0 keeps the top/left inside).
    std::vector<int> u_hi(oh), v_hi(ow);
    for (int y = 0; y < oh; ++y) u_hi[y] = std::min(k, h - (y * stride + anchor));
    for (int xo = 0; xo < ow; ++xo) v_hi[xo] = std::min(k, wd - (xo * stride + anchor));

    for (int ni = 0; ni < n; ++ni)
        for (int ch = 0; ch < c; ++ch) {
            const T* xp = x->data.data() + (static_cast<std::int64_t>(ni) * c + ch) * plane;
            T* op = out->data.data() + (static_cast<std::int64_t>(ni) * c + ch) * oplane;
            std::int32_t* ap =
                arg.empty() ? nullptr : arg.data() + (static_cast<std::int64_t>(ni) * c + ch) * oplane;
            for (int y = 0; y < oh; ++y) {
                const int y0 = y * stride + anchor;
                for (int xo = 0; xo < ow; ++xo) {
                    const int x0 = xo * stride + anchor;
                    if (mode == PoolMode::Avg) {
                        T acc = T(0);
                        for (int u = 0; u < k; ++u) {
                            const T* row = xp + (y0 + u) * wd + x0;
                            for (int v = 0; v < k; ++v) acc += row[v];
                        }
                        op[y * ow + xo] = acc / static_cast<T>(k * k);
                    } else {
                        T best = mode == PoolMode::Max ? -std::numeric_limits<T>::infinity()
                                                       : std::numeric_limits<T>::infinity();
                        std::int32_t best_i = -1;
                        for (int u = 0; u < u_hi[y]; ++u) {
                            const int base = (y0 + u) * wd + x0;
                            const T* row = xp + base;
                            for (int v = 0; v < v_hi[xo]; ++v) {
                                const T val = row[v];
                                const bool better = mode == PoolMode::Max ? val > best : val < best;
                                if (better) {
                                    best = val;
                                    best_i = base + v;
                                }
                            }
                        }
                        op[y * ow + xo] = best;
                        if (ap) ap[y * ow + xo] = best_i;
                    }
                }
            }
        }

    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        if (extremum) {
            out->backward_fn = [x, o, arg = std::move(arg), n, c, plane, oplane] {
                x->ensure_grad();
                for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
                    const T* g = o->grad.data() + pc * oplane;
                    const std::int32_t* a = arg.data() + pc * oplane;
                    T* xg = x->grad.data() + pc * plane;
                    for (std::int64_t i = 0; i < oplane; ++i)
                        if (a[i] >= 0) xg[a[i]] += g[i];
                }
            };
        } else {
            const int kk = k, st = stride, an = anchor, ohh = oh, oww = ow, ww = wd;
            out->backward_fn = [x, o, n, c, plane, oplane, kk, st, an, ohh, oww, ww] {
                x->ensure_grad();
                const T inv = T(1) / static_cast<T>(kk * kk);
                for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
                    const T* g = o->grad.data() + pc * oplane;
                    T* xg = x->grad.data() + pc * plane;
                    for (int y = 0; y < ohh; ++y)
                        for (int xo = 0; xo < oww; ++xo) {
                            const T gv = g[y * oww + xo] * inv;
                            const int y0 = y * st + an, x0 = xo * st + an;
                            for (int u = 0; u < kk; ++u)
                                for (int v = 0; v < kk; ++v) xg[(y0 + u) * ww + (x0 + v)] += gv;
                        }
                }
            };
        }
    }
    return out;
}

}  // namespace detail

// Valid-window pooling; rejects windows larger than the input.
template <typename T>
Var<T> pool2d(const Var<T>& x, PoolMode mode, int k, int stride) {
    auto [n, c, h, wd] = detail::as_nchw(x->shape, "pool2d");
    (void)n;
    (void)c;
    if (k < 1 || stride < 1) throw std::invalid_argument("pool2d: k and stride must be >= 1");
    if (k > h || k > wd)
        throw std::invalid_argument("pool2d: window " + std::to_string(k) + " larger than input " +
                                    shape_str(x->shape));
    const int oh = (h - k) / stride + 1, ow = (wd - k) / stride + 1;
    return detail::pool2d_impl(x, mode, k, stride, 0, oh, ow);
}

// Extremum pooling whose windows start at m*stride + anchor; positions outside
// the input read the pooling-neutral element. Used by the pseudo-morphological
// layers, where the anchor makes stride-r windows straddle pixel-shuffle blocks.
template <typename T>
Var<T> pool2d_anchored(const Var<T>& x, PoolMode mode, int k, int stride, int anchor) {
    if (mode == PoolMode::Avg) throw std::invalid_argument("pool2d_anchored: extremum modes only");
    auto [n, c, h, wd] = detail::as_nchw(x->shape, "pool2d_anchored");
    (void)n;
    (void)c;
    if (k < 1 || stride < 1 || anchor < 0) throw std::invalid_argument("pool2d_anchored: bad params");
    const int oh = (h - anchor + stride - 1) / stride;
    const int ow = (wd - anchor + stride - 1) / stride;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("pool2d_anchored: empty output");
    return detail::pool2d_impl(x, mode, k, stride, anchor, oh, ow);
}

// Constant-pad the two spatial axes.
template <typename T>
Var<T> pad2d(const Var<T>& x, int top, int bottom, int left, int right, T value) {
    auto [n, c, h, wd] = detail::as_nchw(x->shape, "pad2d");
    const int oh = h + top + bottom, ow = wd + left + right;
    auto out = detail::unary_result(x, detail::like_rank(x->shape, c, oh, ow));
    std::fill(out->data.begin(), out->data.end(), value);
    const std::int64_t plane = static_cast<std::int64_t>(h) * wd;
    const std::int64_t oplane = static_cast<std::int64_t>(oh) * ow;
    for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc)
        for (int y = 0; y < h; ++y)
            std::copy(x->data.begin() + pc * plane + static_cast<std::int64_t>(y) * wd,
                      x->data.begin() + pc * plane + static_cast<std::int64_t>(y + 1) * wd,
                      out->data.begin() + pc * oplane + static_cast<std::int64_t>(y + top) * ow + left);
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, o, n, c, h, wd, oh, ow, top, left, plane, oplane] {
            (void)oh;
            x->ensure_grad();
            for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc)
                for (int y = 0; y < h; ++y) {
                    const T* g = o->grad.data() + pc * oplane + static_cast<std::int64_t>(y + top) * ow + left;
                    T* xg = x->grad.data() + pc * plane + static_cast<std::int64_t>(y) * wd;
                    for (int xi = 0; xi < wd; ++xi) xg[xi] += g[xi];
                }
        };
    }
    return out;
}

namespace detail {

// Copies between packed (C*r^2, bh, bw) and spread (C, bh*r, bw*r) layouts.
// spread[c, by*r + a, bx*r + b] = packed[c*r^2 + r*a + b, by, bx]
// Block-structured loops keep division out of the hot path; `gather` adds
// into dst instead of assigning (for gradient accumulation).
template <typename T, bool kToSpread, bool kAccum>
void shuffle_copy(const T* src, T* dst, int count, int r, int bh, int bw) {
    // count = C * r^2 packed channels in total
    const std::int64_t sw = static_cast<std::int64_t>(bw) * r;
    for (int pc = 0; pc < count; ++pc) {
        const int c = pc / (r * r), q = pc % (r * r);
        const int a = q / r, b = q % r;
        const T* s;
        T* d;
        for (int by = 0; by < bh; ++by) {
            const std::int64_t packed_row = (static_cast<std::int64_t>(pc) * bh + by) * bw;
            const std::int64_t spread_row =
                (static_cast<std::int64_t>(c) * bh * r + by * r + a) * sw + b;
            if constexpr (kToSpread) {
                s = src + packed_row;
                d = dst + spread_row;
                for (int bx = 0; bx < bw; ++bx) {
                    if constexpr (kAccum)
                        d[static_cast<std::int64_t>(bx) * r] += s[bx];
                    else
                        d[static_cast<std::int64_t>(bx) * r] = s[bx];
                }
            } else {
                s = src + spread_row;
                d = dst + packed_row;
                for (int bx = 0; bx < bw; ++bx) {
                    if constexpr (kAccum)
                        d[bx] += s[static_cast<std::int64_t>(bx) * r];
                    else
                        d[bx] = s[static_cast<std::int64_t>(bx) * r];
                }
            }
        }
    }
}

// (C*r^2, H, W) <-> (C, H*r, W*r); forward=true is the shuffle direction.
// out[c, y, x] = in[c*r^2 + r*(y%r) + (x%r), y/r, x/r]
template <typename T>
Var<T> shuffle_impl(const Var<T>& x, int r, bool forward) {
    auto [n, c, h, wd] = as_nchw(x->shape, "pixel_shuffle");
    int oc, oh, ow, bh, bw;
    if (forward) {
        if (c % (r * r) != 0)
            throw std::invalid_argument("pixel_shuffle: channels " + std::to_string(c) +
                                        " not divisible by r^2=" + std::to_string(r * r));
        oc = c / (r * r);
        oh = h * r;
        ow = wd * r;
        bh = h;
        bw = wd;
    } else {
        if (h % r != 0 || wd % r != 0)
            throw std::invalid_argument("pixel_unshuffle: spatial dims not divisible by r");
        oc = c * r * r;
        oh = h / r;
        ow = wd / r;
        bh = oh;
        bw = ow;
    }
    auto out = unary_result(x, like_rank(x->shape, oc, oh, ow));
    const std::int64_t in_img = static_cast<std::int64_t>(c) * h * wd;
    const std::int64_t out_img = static_cast<std::int64_t>(oc) * oh * ow;
    const int packed_count = forward ? c : oc;
    for (int ni = 0; ni < n; ++ni) {
        const T* xi = x->data.data() + ni * in_img;
        T* oi = out->data.data() + ni * out_img;
        if (forward)
            shuffle_copy<T, true, false>(xi, oi, packed_count, r, bh, bw);
        else
            shuffle_copy<T, false, false>(xi, oi, packed_count, r, bh, bw);
    }
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, o, n, r, bh, bw, in_img, out_img, packed_count, forward] {
            x->ensure_grad();
            for (int ni = 0; ni < n; ++ni) {
                const T* g = o->grad.data() + ni * out_img;
                T* xg = x->grad.data() + ni * in_img;
                if (forward)
                    shuffle_copy<T, false, true>(g, xg, packed_count, r, bh, bw);
                else
                    shuffle_copy<T, true, true>(g, xg, packed_count, r, bh, bw);
            }
        };
    }
    return out;
}

}  // namespace detail

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r) {
    if (r < 1) throw std::invalid_argument("pixel_shuffle: r must be >= 1");
    return detail::shuffle_impl(x, r, true);
}

template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, int r) {
    if (r < 1) throw std::invalid_argument("pixel_unshuffle: r must be >= 1");
    return detail::shuffle_impl(x, r, false);
}

// Per-channel batch normalization over (N,H,W). Running stats are plain
// buffers owned by the caller; training mode updates them as
// running = (1-momentum)*running + momentum*batch (biased batch variance).
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  std::vector<T>& running_mean, std::vector<T>& running_var, bool training,
                  T momentum = T(0.1), T eps = T(1e-5)) {
    auto [n, c, h, wd] = detail::as_nchw(x->shape, "batch_norm");
    if (gamma->numel() != c || beta->numel() != c ||
        running_mean.size() != static_cast<std::size_t>(c) ||
        running_var.size() != static_cast<std::size_t>(c))
        throw std::invalid_argument("batch_norm: per-channel buffers must match channel count " +
                                    std::to_string(c));
    const std::int64_t plane = static_cast<std::int64_t>(h) * wd;
    const std::int64_t count = static_cast<std::int64_t>(n) * plane;
    if (training && count == 0) throw std::invalid_argument("batch_norm: zero batch in training mode");

    std::vector<T> mu(c), var(c);
    if (training) {
        for (int ch = 0; ch < c; ++ch) {
            T m = T(0);
            for (int ni = 0; ni < n; ++ni) {
                const T* p = x->data.data() + (static_cast<std::int64_t>(ni) * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) m += p[i];
            }
            m /= static_cast<T>(count);
            T v = T(0);
            for (int ni = 0; ni < n; ++ni) {
                const T* p = x->data.data() + (static_cast<std::int64_t>(ni) * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const T d = p[i] - m;
                    v += d * d;
                }
            }
            v /= static_cast<T>(count);
            mu[ch] = m;
            var[ch] = v;
            running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * m;
            running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * v;
        }
    } else {
        mu.assign(running_mean.begin(), running_mean.end());
        var.assign(running_var.begin(), running_var.end());
    }

    std::vector<T> inv_std(c);
    for (int ch = 0; ch < c; ++ch) inv_std[ch] = T(1) / std::sqrt(var[ch] + eps);

    auto out = Tensor<T>::create(x->shape);
    out->requires_grad = x->requires_grad || gamma->requires_grad || beta->requires_grad;
    if (out->requires_grad) out->parents = {x, gamma, beta};
    for (int ni = 0; ni < n; ++ni)
        for (int ch = 0; ch < c; ++ch) {
            const T* p = x->data.data() + (static_cast<std::int64_t>(ni) * c + ch) * plane;
            T* op = out->data.data() + (static_cast<std::int64_t>(ni) * c + ch) * plane;
            const T g = gamma->data[ch], bt = beta->data[ch], m = mu[ch], is = inv_std[ch];
            for (std::int64_t i = 0; i < plane; ++i) op[i] = (p[i] - m) * is * g + bt;
        }

    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, gamma, beta, o, n, c, plane, count, mu, inv_std, training] {
            if (x->requires_grad) x->ensure_grad();
            if (gamma->requires_grad) gamma->ensure_grad();
            if (beta->requires_grad) beta->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                const T m = mu[ch], is = inv_std[ch], gm = gamma->data[ch];
                T sum_g = T(0), sum_gx = T(0);
                for (int ni = 0; ni < n; ++ni) {
                    const T* gp = o->grad.data() + (static_cast<std::int64_t>(ni) * c + ch) * plane;
                    const T* p = x->data.data() + (static_cast<std::int64_t>(ni) * c + ch) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        sum_g += gp[i];
                        sum_gx += gp[i] * (p[i] - m) * is;
                    }
                }
                if (beta->requires_grad) beta->grad[ch] += sum_g;
                if (gamma->requires_grad) gamma->grad[ch] += sum_gx;
                if (!x->requires_grad) continue;
                for (int ni = 0; ni < n; ++ni) {
                    const T* gp = o->grad.data() + (static_cast<std::int64_t>(ni) * c + ch) * plane;
                    const T* p = x->data.data() + (static_cast<std::int64_t>(ni) * c + ch) * plane;
                    T* xg = x->grad.data() + (static_cast<std::int64_t>(ni) * c + ch) * plane;
                    if (training) {
                        const T inv_n = T(1) / static_cast<T>(count);
                        for (std::int64_t i = 0; i < plane; ++i) {
                            const T xhat = (p[i] - m) * is;
                            xg[i] += gm * is * (gp[i] - inv_n * sum_g - inv_n * xhat * sum_gx);
                        }
                    } else {
                        for (std::int64_t i = 0; i < plane; ++i) xg[i] += gp[i] * gm * is;
                    }
                }
            }
        };
    }
    return out;
}

// (N,C,H,W) -> (N,C) mean over the spatial plane.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    auto [n, c, h, wd] = detail::as_nchw(x->shape, "global_avg_pool");
    const std::int64_t plane = static_cast<std::int64_t>(h) * wd;
    auto out = detail::unary_result(x, Shape{n, c});
    for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
        T acc = T(0);
        const T* p = x->data.data() + pc * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
        out->data[pc] = acc / static_cast<T>(plane);
    }
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, o, n, c, plane] {
            x->ensure_grad();
            for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
                const T g = o->grad[pc] / static_cast<T>(plane);
                T* xg = x->grad.data() + pc * plane;
                for (std::int64_t i = 0; i < plane; ++i) xg[i] += g;
            }
        };
    }
    return out;
}

// Bilinear resize (half-pixel centers), differentiable.
template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, int oh, int ow) {
    auto [n, c, h, wd] = detail::as_nchw(x->shape, "upsample_bilinear");
    if (oh < 1 || ow < 1) throw std::invalid_argument("upsample_bilinear: bad output size");
    auto out = detail::unary_result(x, detail::like_rank(x->shape, c, oh, ow));
    const std::int64_t plane = static_cast<std::int64_t>(h) * wd;
    const std::int64_t oplane = static_cast<std::int64_t>(oh) * ow;
    const T sy = static_cast<T>(h) / static_cast<T>(oh), sx = static_cast<T>(wd) / static_cast<T>(ow);

    struct Tap {
        int y0, y1, x0, x1;
        T wy, wx;
    };
    std::vector<Tap> taps(static_cast<std::size_t>(oplane));
    for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo) {
            T fy = (static_cast<T>(y) + T(0.5)) * sy - T(0.5);
            T fx = (static_cast<T>(xo) + T(0.5)) * sx - T(0.5);
            fy = std::max(T(0), std::min(fy, static_cast<T>(h - 1)));
            fx = std::max(T(0), std::min(fx, static_cast<T>(wd - 1)));
            Tap t;
            t.y0 = static_cast<int>(fy);
            t.x0 = static_cast<int>(fx);
            t.y1 = std::min(t.y0 + 1, h - 1);
            t.x1 = std::min(t.x0 + 1, wd - 1);
            t.wy = fy - static_cast<T>(t.y0);
            t.wx = fx - static_cast<T>(t.x0);
            taps[static_cast<std::size_t>(y) * ow + xo] = t;
        }

    for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
        const T* p = x->data.data() + pc * plane;
        T* op = out->data.data() + pc * oplane;
        for (std::int64_t i = 0; i < oplane; ++i) {
            const Tap& t = taps[static_cast<std::size_t>(i)];
            const T a = p[t.y0 * wd + t.x0], bb = p[t.y0 * wd + t.x1];
            const T cc = p[t.y1 * wd + t.x0], dd = p[t.y1 * wd + t.x1];
            op[i] = (T(1) - t.wy) * ((T(1) - t.wx) * a + t.wx * bb) + t.wy * ((T(1) - t.wx) * cc + t.wx * dd);
        }
    }
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, o, taps = std::move(taps), n, c, plane, oplane, wd] {
            x->ensure_grad();
            for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
                const T* g = o->grad.data() + pc * oplane;
                T* xg = x->grad.data() + pc * plane;
                for (std::int64_t i = 0; i < oplane; ++i) {
                    const Tap& t = taps[static_cast<std::size_t>(i)];
                    const T gv = g[i];
                    xg[t.y0 * wd + t.x0] += gv * (T(1) - t.wy) * (T(1) - t.wx);
                    xg[t.y0 * wd + t.x1] += gv * (T(1) - t.wy) * t.wx;
                    xg[t.y1 * wd + t.x0] += gv * t.wy * (T(1) - t.wx);
                    xg[t.y1 * wd + t.x1] += gv * t.wy * t.wx;
                }
            }
        };
    }
    return out;
}

// Inverted dropout; identity in eval mode.
template <typename T>
Var<T> dropout(const Var<T>& x, T p, bool training, std::mt19937& rng) {
    if (p < T(0) || p >= T(1)) throw std::invalid_argument("dropout: p must be in [0,1)");
    if (!training || p == T(0)) return x;
    auto out = detail::unary_result(x, x->shape);
    std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
    std::vector<T> mask(x->data.size());
    const T scale = T(1) / (T(1) - p);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? scale : T(0);
    for (std::size_t i = 0; i < mask.size(); ++i) out->data[i] = x->data[i] * mask[i];
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, o, mask = std::move(mask)] {
            x->ensure_grad();
            for (std::size_t i = 0; i < mask.size(); ++i) x->grad[i] += o->grad[i] * mask[i];
        };
    }
    return out;
}

// Mean binary cross-entropy of probabilities against a same-size 0/1 target.
template <typename T>
Var<T> binary_cross_entropy(const Var<T>& pred, const std::vector<T>& target) {
    if (pred->data.size() != target.size())
        throw std::invalid_argument("binary_cross_entropy: target size mismatch");
    auto out = detail::unary_result(pred, Shape{1});
    const T lo = T(1e-7), hi = T(1) - T(1e-7);
    T loss = T(0);
    for (std::size_t i = 0; i < target.size(); ++i) {
        const T p = std::clamp(pred->data[i], lo, hi);
        loss -= target[i] * std::log(p) + (T(1) - target[i]) * std::log(T(1) - p);
    }
    out->data[0] = loss / static_cast<T>(target.size());
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [pred, o, target, lo, hi] {
            pred->ensure_grad();
            const T g = o->grad[0] / static_cast<T>(target.size());
            for (std::size_t i = 0; i < target.size(); ++i) {
                const T p = std::clamp(pred->data[i], lo, hi);
                pred->grad[i] += g * (p - target[i]) / (p * (T(1) - p));
            }
        };
    }
    return out;
}

// Mean cross-entropy over rows of (N, K) logits.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
    if (logits->rank() != 2) throw std::invalid_argument("softmax_cross_entropy: logits must be (N,K)");
    const int n = logits->dim(0), k = logits->dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    for (int l : labels)
        if (l < 0 || l >= k) throw std::invalid_argument("softmax_cross_entropy: label out of range");

    auto out = detail::unary_result(logits, Shape{1});
    std::vector<T> probs(logits->data.size());
    T loss = T(0);
    for (int i = 0; i < n; ++i) {
        const T* row = logits->data.data() + static_cast<std::int64_t>(i) * k;
        T* prow = probs.data() + static_cast<std::int64_t>(i) * k;
        T mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        T z = T(0);
        for (int j = 0; j < k; ++j) {
            prow[j] = std::exp(row[j] - mx);
            z += prow[j];
        }
        for (int j = 0; j < k; ++j) prow[j] /= z;
        loss -= std::log(std::max(prow[labels[i]], std::numeric_limits<T>::min()));
    }
    out->data[0] = loss / static_cast<T>(n);
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [logits, o, probs = std::move(probs), labels, n, k] {
            logits->ensure_grad();
            const T g = o->grad[0] / static_cast<T>(n);
            for (int i = 0; i < n; ++i) {
                const T* prow = probs.data() + static_cast<std::int64_t>(i) * k;
                T* lg = logits->grad.data() + static_cast<std::int64_t>(i) * k;
                for (int j = 0; j < k; ++j) lg[j] += g * (prow[j] - (j == labels[i] ? T(1) : T(0)));
            }
        };
    }
    return out;
}

}  // namespace morphnas
