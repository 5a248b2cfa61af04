// Classical grayscale morphology on float images.
//
// Erosion:  eps_b(f)[n1,n2] = min_{(i,j) in N} f[n1+i, n2+j] - b[i,j]
// Dilation: del_b(f)[n1,n2] = max_{(i,j) in N} f[n1-i, n2-j] + b[i,j]
// Out-of-bounds samples read the pooling-neutral element (+inf for min,
// -inf for max), which keeps the erosion/dilation duality exact at borders.
#pragma once

#include <string>
#include <vector>

#include "morphnas/image.hpp"

namespace morphnas {

struct StructuringElement {
    struct Entry {
        int di = 0;
        int dj = 0;
        float weight = 0.f;
    };
    std::vector<Entry> entries;

    bool flat() const;
    bool origin_included() const;
    StructuringElement reflected() const;  // negate all offsets, keep weights
    void validate() const;                 // unique offsets, nonempty

    static StructuringElement single_point();
    static StructuringElement square(int k);  // offsets in [-k, k]^2
    static StructuringElement cross(int k);   // |di| + |dj| <= k on the axes
    static StructuringElement disk(int k);    // Euclidean radius <= k
    // Parses "disk:3", "square:2", "cross:1". square:0 is the single point.
    static StructuringElement parse(const std::string& text);
};

GrayImage erode(const GrayImage& f, const StructuringElement& se);
GrayImage dilate(const GrayImage& f, const StructuringElement& se);
GrayImage opening(const GrayImage& f, const StructuringElement& se);
GrayImage closing(const GrayImage& f, const StructuringElement& se);

struct MorphGradients {
    GrayImage external;  // dilation - f
    GrayImage internal;  // f - erosion
    GrayImage combined;  // dilation - erosion
};
MorphGradients gradients(const GrayImage& f, const StructuringElement& se);

}  // namespace morphnas
