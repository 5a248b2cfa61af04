// Grayscale float images and binary PGM (P5) I/O.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace morphnas {

struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // row-major, arbitrary range (no clamping)

    GrayImage() = default;
    GrayImage(int h, int w, float fill = 0.f)
        : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

    float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    bool same_size(const GrayImage& o) const { return height == o.height && width == o.width; }
};

// P5 PGM. 8-bit (maxval <= 255) and 16-bit (big-endian samples, per the spec
// of the format) files round-trip bit-exactly. Pixel values are the raw
// integer sample values as floats.
GrayImage read_pgm(const std::string& path);
void write_pgm(const GrayImage& img, const std::string& path, int bits = 8);

// Min-max normalize to [0,1]; constant images map to 0.
GrayImage normalize01(const GrayImage& img);

}  // namespace morphnas
