#include "morphnas/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

namespace morphnas {

namespace {

// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& in, const std::string& path) {
    int ch;
    while ((ch = in.get()) != EOF) {
        if (std::isspace(ch)) continue;
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        break;
    }
    if (ch == EOF) throw std::runtime_error("pgm: truncated header in " + path);
    int value = 0;
    bool any = false;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        any = true;
        ch = in.get();
    }
    if (!any) throw std::runtime_error("pgm: malformed header in " + path);
    return value;
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pgm: cannot open " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5') throw std::runtime_error("pgm: not a P5 file: " + path);
    const int w = next_header_int(in, path);
    const int h = next_header_int(in, path);
    const int maxval = next_header_int(in, path);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw std::runtime_error("pgm: bad dimensions/maxval in " + path);
    // next_header_int consumed exactly one byte past the maxval (the single
    // whitespace separator required before the raster)
    GrayImage img(h, w);
    const std::size_t n = img.pixels.size();
    if (maxval <= 255) {
        std::vector<std::uint8_t> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw std::runtime_error("pgm: truncated raster in " + path);
        for (std::size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<float>(buf[i]);
    } else {
        std::vector<std::uint8_t> buf(n * 2);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 2));
        if (static_cast<std::size_t>(in.gcount()) != n * 2)
            throw std::runtime_error("pgm: truncated raster in " + path);
        for (std::size_t i = 0; i < n; ++i)
            img.pixels[i] = static_cast<float>((buf[2 * i] << 8) | buf[2 * i + 1]);
    }
    return img;
}

void write_pgm(const GrayImage& img, const std::string& path, int bits) {
    if (bits != 8 && bits != 16) throw std::invalid_argument("pgm: bits must be 8 or 16");
    if (img.height <= 0 || img.width <= 0) throw std::invalid_argument("pgm: empty image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pgm: cannot write " + path);
    const int maxval = bits == 8 ? 255 : 65535;
    out << "P5\n" << img.width << " " << img.height << "\n" << maxval << "\n";
    if (bits == 8) {
        std::vector<std::uint8_t> buf(img.pixels.size());
        for (std::size_t i = 0; i < buf.size(); ++i) {
            const float v = std::clamp(img.pixels[i], 0.f, 255.f);
            buf[i] = static_cast<std::uint8_t>(v + 0.5f);
        }
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    } else {
        std::vector<std::uint8_t> buf(img.pixels.size() * 2);
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            const float v = std::clamp(img.pixels[i], 0.f, 65535.f);
            const auto s = static_cast<std::uint16_t>(v + 0.5f);
            buf[2 * i] = static_cast<std::uint8_t>(s >> 8);
            buf[2 * i + 1] = static_cast<std::uint8_t>(s & 0xff);
        }
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw std::runtime_error("pgm: write failed for " + path);
}

GrayImage normalize01(const GrayImage& img) {
    GrayImage out = img;
    if (img.pixels.empty()) return out;
    const auto [mn, mx] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    const float lo = *mn, hi = *mx;
    if (hi <= lo) {
        std::fill(out.pixels.begin(), out.pixels.end(), 0.f);
        return out;
    }
    for (auto& p : out.pixels) p = (p - lo) / (hi - lo);
    return out;
}

}  // namespace morphnas
