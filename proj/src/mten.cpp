#include "morphnas/mten.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace morphnas {

namespace {

static_assert(std::endian::native == std::endian::little,
              "MTEN I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw std::runtime_error("mten: truncated file " + path);
    return v;
}

std::uint64_t count_of(const std::vector<std::uint32_t>& dims) {
    std::uint64_t n = 1;
    for (auto d : dims) {
        if (d == 0) throw std::invalid_argument("mten: zero dim");
        n *= d;
    }
    return n;
}

void write_header(std::ostream& out, std::uint32_t dtype, const std::vector<std::uint32_t>& dims) {
    out.write("MTEN", 4);
    put_u32(out, 1);
    put_u32(out, dtype);
    put_u32(out, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) put_u32(out, d);
}

}  // namespace

void write_mten_f32(const std::string& path, const std::vector<std::uint32_t>& dims,
                    const float* data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("mten: cannot write " + path);
    write_header(out, 1, dims);
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count_of(dims) * sizeof(float)));
    if (!out) throw std::runtime_error("mten: write failed for " + path);
}

void write_mten_f64(const std::string& path, const std::vector<std::uint32_t>& dims,
                    const double* data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("mten: cannot write " + path);
    write_header(out, 2, dims);
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count_of(dims) * sizeof(double)));
    if (!out) throw std::runtime_error("mten: write failed for " + path);
}

MtenData read_mten(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("mten: cannot open " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MTEN", 4) != 0)
        throw std::runtime_error("mten: bad magic in " + path);
    const auto version = get_u32(in, path);
    if (version != 1) throw std::runtime_error("mten: unsupported version in " + path);
    MtenData md;
    md.dtype = static_cast<int>(get_u32(in, path));
    if (md.dtype != 1 && md.dtype != 2) throw std::runtime_error("mten: unsupported dtype in " + path);
    const auto rank = get_u32(in, path);
    if (rank > 8) throw std::runtime_error("mten: implausible rank in " + path);
    md.dims.resize(rank);
    for (auto& d : md.dims) d = get_u32(in, path);
    const auto n = count_of(md.dims);
    if (md.dtype == 1) {
        md.f32.resize(n);
        in.read(reinterpret_cast<char*>(md.f32.data()), static_cast<std::streamsize>(n * sizeof(float)));
    } else {
        md.f64.resize(n);
        in.read(reinterpret_cast<char*>(md.f64.data()), static_cast<std::streamsize>(n * sizeof(double)));
    }
    if (!in) throw std::runtime_error("mten: truncated payload in " + path);
    return md;
}

}  // namespace morphnas
