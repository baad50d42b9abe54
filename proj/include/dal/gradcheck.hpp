#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dal/rng.hpp"
#include "dal/tensor.hpp"

namespace dal::ad {

// Compares reverse-mode gradients against central differences.
//
// `forward` must rebuild the graph from the live parameter buffers on every
// call; the checker perturbs those buffers in place between calls. Runs in
// double precision only — float round-off would swamp the comparison.
//
// When max_coords_per_tensor > 0, only that many randomly chosen coordinates
// of each parameter are probed (whole-model checks would otherwise need two
// forward passes per scalar weight). The analytic sweep always covers every
// coordinate; subsampling affects the numeric side alone.
//
// `denom_floor` is the absolute scale below which a coordinate counts as zero:
// both sides of the comparison sit in finite-difference noise there, so the
// relative error is measured against the floor instead. Deep compositions can
// contain structurally zero gradients (a bias feeding a batch norm, say) and
// need a floor above the noise that 2|loss|*ulp/(2*eps) leaves behind.
struct GradCheckReport {
    double max_rel_err = 0.0;
    int coords_checked = 0;
};

inline GradCheckReport grad_check(const std::function<Tensor<double>()>& forward,
                                  const std::vector<Tensor<double>>& params,
                                  double eps = 1e-5, int max_coords_per_tensor = 0,
                                  uint64_t seed = 0, double denom_floor = 1e-8) {
    for (const auto& p : params)
        check(p.requires_grad(), "grad_check: every parameter must track gradients");

    for (auto p : params) p.zero_grad();
    Tensor<double> loss = forward();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        check(p.has_grad(), "grad_check: parameter received no gradient");
        analytic.emplace_back(p.grad().begin(), p.grad().end());
    }

    Rng rng(seed, 77);
    GradCheckReport rep;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<double> p = params[pi];
        const int64_t m = p.numel();
        std::vector<int64_t> coords;
        if (max_coords_per_tensor <= 0 || m <= max_coords_per_tensor) {
            coords.resize(static_cast<size_t>(m));
            for (int64_t i = 0; i < m; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            // sample without replacement via partial Fisher-Yates
            std::vector<int64_t> all(static_cast<size_t>(m));
            for (int64_t i = 0; i < m; ++i) all[static_cast<size_t>(i)] = i;
            for (int i = 0; i < max_coords_per_tensor; ++i) {
                const auto j = i + static_cast<int64_t>(rng.below(static_cast<uint64_t>(m - i)));
                std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(j)]);
            }
            coords.assign(all.begin(), all.begin() + max_coords_per_tensor);
        }

        double* buf = p.ptr();
        for (int64_t i : coords) {
            const double v = buf[i];
            double lp, lm;
            {
                NoGradGuard ng;
                buf[i] = v + eps;
                lp = forward().item();
                buf[i] = v - eps;
                lm = forward().item();
                buf[i] = v;
            }
            const double numeric = (lp - lm) / (2.0 * eps);
            const double a = analytic[pi][static_cast<size_t>(i)];
            const double denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
            rep.max_rel_err = std::max(rep.max_rel_err, std::abs(a - numeric) / denom);
            ++rep.coords_checked;
        }
    }
    return rep;
}

} // namespace dal::ad
