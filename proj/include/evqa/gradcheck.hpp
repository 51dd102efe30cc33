#pragma once

// Central finite-difference verification of analytic gradients. Runs in
// double precision; used by the unit suite, the acceptance suite, and the
// CLI `check` command against every loss in the project.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "evqa/errors.hpp"
#include "evqa/optimizer.hpp"
#include "evqa/tensor.hpp"

namespace evqa {

struct GradCheckReport {
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    long coords_checked = 0;
    bool pass = false;
    std::string worst;  // "param[index]" of the worst coordinate
};

// Checks d(build_loss)/d(params) against central differences. build_loss must
// be deterministic and rebuild the graph from the current parameter values on
// every call. When max_coords_per_param >= 0, a seeded subset of coordinates
// is probed instead of every entry.
template <class Fn>
GradCheckReport grad_check_params(Fn&& build_loss, ParamSet<double>& params, double tol,
                                  double h = 1e-5, long max_coords_per_param = -1,
                                  std::uint64_t coord_seed = 0) {
    const double v0 = build_loss().item();
    const double v1 = build_loss().item();
    if (v0 != v1)
        throw ContractError("grad_check: function is not deterministic; check invalid");

    params.zero_grad();
    Tensor<double> loss = build_loss();
    loss.backward();

    GradCheckReport report;
    report.tolerance = tol;
    std::mt19937_64 rng(coord_seed);
    for (auto& p : params.items()) {
        if (!p.tensor.requires_grad()) continue;
        const auto analytic = p.tensor.has_grad() ? p.tensor.grad()
                                                  : std::vector<double>(p.tensor.size(), 0.0);
        std::vector<size_t> coords;
        const size_t n = p.tensor.size();
        if (max_coords_per_param < 0 || size_t(max_coords_per_param) >= n) {
            coords.resize(n);
            for (size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            std::uniform_int_distribution<size_t> pick(0, n - 1);
            for (long i = 0; i < max_coords_per_param; ++i) coords.push_back(pick(rng));
        }
        auto& vals = p.tensor.mutable_values();
        for (size_t i : coords) {
            const double keep = vals[i];
            vals[i] = keep + h;
            const double fp = build_loss().item();
            vals[i] = keep - h;
            const double fm = build_loss().item();
            vals[i] = keep;
            const double fd = (fp - fm) / (2.0 * h);
            const double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-6});
            const double rel = std::abs(analytic[i] - fd) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

// Spec-shaped variant: scalar function of a single tensor, checked at `point`.
inline GradCheckReport grad_check(
    const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> point,
    double tol, double h = 1e-5) {
    if (!point.requires_grad()) {
        point = Tensor<double>::from(point.rows(), point.cols(), point.values(), true);
    }
    ParamSet<double> params;
    params.add("point", point, false);
    return grad_check_params([&] { return f(point); }, params, tol, h);
}

}  // namespace evqa
