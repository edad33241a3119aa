#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "core/autograd.hpp"
#include "core/rng.hpp"

namespace ccd::testing {

// Central finite differences against analytic gradients at float64.
// `f` must rebuild the graph from the leaf values on every call.
// Checks up to `n_coords` coordinates per leaf (all if fewer).
inline double max_rel_grad_error(
    const std::function<nn::Var<double>(std::vector<nn::Var<double>>&)>& f,
    std::vector<ccd::Tensor<double>> leaf_values, int n_coords, uint64_t seed,
    double h = 1e-5) {
    using nn::Var;
    std::vector<Var<double>> leaves;
    for (auto& t : leaf_values) leaves.push_back(Var<double>::leaf(t, true));
    Var<double> out = f(leaves);
    nn::backward(out);

    Rng rng(seed);
    double worst = 0.0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        const int64_t n = leaves[li].value().numel();
        const int m = static_cast<int>(std::min<int64_t>(n, n_coords));
        for (int t = 0; t < m; ++t) {
            const int64_t i = (n <= n_coords) ? t : rng.uniform_int(n);
            const double analytic = leaves[li].grad()[i];

            auto eval = [&](double delta) {
                std::vector<Var<double>> l2;
                for (size_t j = 0; j < leaf_values.size(); ++j) {
                    Tensor<double> v = leaf_values[j];
                    if (j == li) v[i] += delta;
                    l2.push_back(Var<double>::leaf(v, false));
                }
                return f(l2).item();
            };
            const double numeric = (eval(h) - eval(-h)) / (2 * h);
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

inline ccd::Tensor<double> random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
    ccd::Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace ccd::testing
