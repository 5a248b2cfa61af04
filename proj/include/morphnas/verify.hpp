// Self-check suites behind `layer-check`: collapse the pseudo layers onto
// classical morphology (computed by the independent image-domain module) and
// run finite-difference gradient checks on every parameter group.
#pragma once

#include <string>
#include <vector>

#include "morphnas/layers.hpp"

namespace morphnas {

struct CheckReport {
    struct Line {
        std::string name;
        bool pass = false;
        std::string detail;
    };
    std::vector<Line> lines;

    bool all_pass() const;
    std::string text() const;  // "PASS <name>" / "FAIL <name>: detail" lines
};

std::string pseudo_variant_name(PseudoVariant v);
PseudoVariant pseudo_variant_from_name(const std::string& s);

// Bitwise oracle-collapse check against the classical counterpart on `images`
// random integer-valued 1x8x8 inputs (r=2, one-hot projection, frozen batch
// norm, zero biases).
CheckReport::Line collapse_check(PseudoVariant variant, unsigned seed, int images);

// 64-bit central finite differences on input, projection weights/biases and
// batch-norm scale/shift at generic points.
CheckReport::Line pseudo_gradient_check(PseudoVariant variant, unsigned seed, double rel_tol,
                                        int probes);

CheckReport::Line shape_contract_check(PseudoVariant variant, unsigned seed);
CheckReport::Line determinism_check(PseudoVariant variant, unsigned seed);

CheckReport layer_check(PseudoVariant variant, unsigned seed, double rel_tol = 1e-4,
                        int images = 25, int probes = 20);

}  // namespace morphnas
