// Central finite-difference gradient checking (64-bit only).
#pragma once

#include <functional>
#include <random>
#include <sstream>

#include "morphnas/tensor.hpp"

namespace morphnas {

struct GradCheckResult {
    bool ok = true;
    double max_rel_err = 0.0;
    std::string detail;  // first failing coordinate, if any
};

// Checks d(scalar fn())/d(leaf[i]) against central differences at `probes`
// randomly chosen coordinates per leaf. fn must rebuild the graph from the
// leaves' current data on every call.
inline GradCheckResult gradcheck(const std::function<Var<double>()>& fn,
                                 const std::vector<Var<double>>& leaves, int probes,
                                 std::mt19937& rng, double rel_tol = 1e-4, double step = 1e-3) {
    GradCheckResult res;
    for (auto& leaf : leaves) {
        leaf->requires_grad = true;
        leaf->ensure_grad();
        leaf->zero_grad();
    }
    auto loss = fn();
    backward(loss);

    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        const std::int64_t n = leaf->numel();
        std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
        const int count = probes < n ? probes : static_cast<int>(n);
        const bool exhaustive = probes >= n;
        int done = 0, attempts = 0;
        while (attempts < (exhaustive ? count : 20 * count) && (exhaustive || done < count)) {
            const std::int64_t i = exhaustive ? attempts : pick(rng);
            ++attempts;
            const double orig = leaf->data[i];
            auto eval_at = [&](double v) {
                leaf->data[i] = v;
                const double r = fn()->data[0];
                leaf->data[i] = orig;
                return r;
            };
            const double f1 = eval_at(orig + step);
            const double f2 = eval_at(orig - step);
            // Piecewise boundaries (extremum-pool argmax flips inside the
            // probe interval) make the point non-generic for this coordinate:
            // halving the step then shifts the central-difference estimate,
            // while for smooth functions it changes by O(step^2) only. Skip
            // step-unstable points.
            const double numeric = (f1 - f2) / (2.0 * step);
            const double fine = (eval_at(orig + step / 2) - eval_at(orig - step / 2)) / step;
            if (std::abs(numeric - fine) >
                0.25 * rel_tol * std::max({std::abs(numeric), std::abs(fine), 1.0}))
                continue;
            ++done;
            const double analytic = leaf->grad[i];
            // The 1e-2 denominator floor reflects the central-difference
            // truncation limit at step 1e-3: smaller gradients cannot be
            // resolved to 1e-4 relative accuracy.
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-2});
            const double rel = std::abs(numeric - analytic) / denom;
            if (std::abs(numeric - analytic) > 1e-7 && rel > res.max_rel_err) res.max_rel_err = rel;
            if (std::abs(numeric - analytic) > 1e-7 && rel > rel_tol && res.ok) {
                res.ok = false;
                std::ostringstream os;
                os << "leaf " << li << " coord " << i << ": analytic=" << analytic
                   << " numeric=" << numeric << " rel=" << rel;
                res.detail = os.str();
            }
        }
        if (((exhaustive && done < 1) || (!exhaustive && done < count)) && res.ok) {
            res.ok = false;
            res.detail = "leaf " + std::to_string(li) + ": could not find enough generic points";
        }
    }
    return res;
}

}  // namespace morphnas
