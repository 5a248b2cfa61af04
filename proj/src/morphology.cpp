#include "morphnas/morphology.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <stdexcept>

namespace morphnas {

namespace {
constexpr float kInf = std::numeric_limits<float>::infinity();
}

bool StructuringElement::flat() const {
    return std::all_of(entries.begin(), entries.end(), [](const Entry& e) { return e.weight == 0.f; });
}

bool StructuringElement::origin_included() const {
    return std::any_of(entries.begin(), entries.end(),
                       [](const Entry& e) { return e.di == 0 && e.dj == 0; });
}

StructuringElement StructuringElement::reflected() const {
    StructuringElement out;
    out.entries.reserve(entries.size());
    for (const auto& e : entries) out.entries.push_back({-e.di, -e.dj, e.weight});
    return out;
}

void StructuringElement::validate() const {
    if (entries.empty()) throw std::invalid_argument("structuring element: empty offset set");
    std::set<std::pair<int, int>> seen;
    for (const auto& e : entries)
        if (!seen.insert({e.di, e.dj}).second)
            throw std::invalid_argument("structuring element: duplicate offset");
}

StructuringElement StructuringElement::single_point() {
    StructuringElement se;
    se.entries.push_back({0, 0, 0.f});
    return se;
}

StructuringElement StructuringElement::square(int k) {
    if (k < 0) throw std::invalid_argument("square SE: k must be >= 0");
    StructuringElement se;
    for (int i = -k; i <= k; ++i)
        for (int j = -k; j <= k; ++j) se.entries.push_back({i, j, 0.f});
    return se;
}

StructuringElement StructuringElement::cross(int k) {
    if (k < 0) throw std::invalid_argument("cross SE: k must be >= 0");
    StructuringElement se;
    se.entries.push_back({0, 0, 0.f});
    for (int d = 1; d <= k; ++d) {
        se.entries.push_back({-d, 0, 0.f});
        se.entries.push_back({d, 0, 0.f});
        se.entries.push_back({0, -d, 0.f});
        se.entries.push_back({0, d, 0.f});
    }
    return se;
}

StructuringElement StructuringElement::disk(int k) {
    if (k < 0) throw std::invalid_argument("disk SE: k must be >= 0");
    StructuringElement se;
    for (int i = -k; i <= k; ++i)
        for (int j = -k; j <= k; ++j)
            if (i * i + j * j <= k * k) se.entries.push_back({i, j, 0.f});
    return se;
}

StructuringElement StructuringElement::parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw std::invalid_argument("SE spec must look like disk:3 / square:2 / cross:1, got '" + text + "'");
    const std::string kind = text.substr(0, colon);
    int k = 0;
    try {
        std::size_t used = 0;
        k = std::stoi(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("");
    } catch (const std::exception&) {
        throw std::invalid_argument("SE spec has a bad size: '" + text + "'");
    }
    if (kind == "disk") return disk(k);
    if (kind == "square") return square(k);
    if (kind == "cross") return cross(k);
    throw std::invalid_argument("unknown SE kind '" + kind + "'");
}

GrayImage erode(const GrayImage& f, const StructuringElement& se) {
    se.validate();
    GrayImage out(f.height, f.width);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            float best = kInf;
            for (const auto& e : se.entries) {
                const int sy = y + e.di, sx = x + e.dj;
                const float v = (sy < 0 || sy >= f.height || sx < 0 || sx >= f.width)
                                    ? kInf
                                    : f.at(sy, sx);
                best = std::min(best, v - e.weight);
            }
            out.at(y, x) = best;
        }
    return out;
}

GrayImage dilate(const GrayImage& f, const StructuringElement& se) {
    se.validate();
    GrayImage out(f.height, f.width);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            float best = -kInf;
            for (const auto& e : se.entries) {
                const int sy = y - e.di, sx = x - e.dj;
                const float v = (sy < 0 || sy >= f.height || sx < 0 || sx >= f.width)
                                    ? -kInf
                                    : f.at(sy, sx);
                best = std::max(best, v + e.weight);
            }
            out.at(y, x) = best;
        }
    return out;
}

GrayImage opening(const GrayImage& f, const StructuringElement& se) { return dilate(erode(f, se), se); }

GrayImage closing(const GrayImage& f, const StructuringElement& se) { return erode(dilate(f, se), se); }

MorphGradients gradients(const GrayImage& f, const StructuringElement& se) {
    MorphGradients g;
    const GrayImage d = dilate(f, se);
    const GrayImage e = erode(f, se);
    g.external = GrayImage(f.height, f.width);
    g.internal = GrayImage(f.height, f.width);
    g.combined = GrayImage(f.height, f.width);
    for (std::size_t i = 0; i < f.pixels.size(); ++i) {
        g.external.pixels[i] = d.pixels[i] - f.pixels[i];
        g.internal.pixels[i] = f.pixels[i] - e.pixels[i];
        g.combined.pixels[i] = d.pixels[i] - e.pixels[i];
    }
    return g;
}

}  // namespace morphnas
