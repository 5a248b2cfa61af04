// MTEN tensor file format, used for golden files and checkpoints.
//
//   magic "MTEN" | u32 version (=1) | u32 dtype (1=f32, 2=f64) | u32 rank |
//   rank x u32 dims | raw little-endian payload
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace morphnas {

struct MtenData {
    std::vector<std::uint32_t> dims;
    std::vector<float> f32;   // filled when dtype=1
    std::vector<double> f64;  // filled when dtype=2
    int dtype = 1;
};

void write_mten_f32(const std::string& path, const std::vector<std::uint32_t>& dims,
                    const float* data);
void write_mten_f64(const std::string& path, const std::vector<std::uint32_t>& dims,
                    const double* data);
MtenData read_mten(const std::string& path);

}  // namespace morphnas
