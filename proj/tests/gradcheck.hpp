// SPDX-License-Identifier: Apache-2.0
// Central-difference gradient checks shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "distill/autograd.hpp"

namespace distill::testing {

struct GradCheck {
    double max_rel_error = 0.0;
    double max_abs_gradient = 0.0;
    int entries = 0;
};

/// Compares d(loss)/d(param) from backward() with (f(x+h) - f(x-h)) / 2h on
/// up to max_entries entries (all when <= 0). Relative error is
/// |a - n| / max(|a|, |n|); entries where both magnitudes are below
/// zero_floor are exact zeros up to round-off and count as agreeing.
inline GradCheck check_gradient(const std::function<ag::Tensor()>& loss_fn, ag::Tensor param, double h = 1e-6,
                                int max_entries = 0, std::uint64_t seed = 1, double zero_floor = 1e-8) {
    GradCheck out;
    param.zero_grad();
    const auto loss = loss_fn();
    loss.backward();
    const ag::Matrix analytic = param.grad();

    std::vector<Eigen::Index> idx(static_cast<std::size_t>(param.value().size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
    if (max_entries > 0 && static_cast<int>(idx.size()) > max_entries) {
        std::mt19937_64 rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(max_entries));
    }
    ag::NoGradGuard no_grad;
    for (const auto flat : idx) {
        double& x = param.mutable_value().data()[flat];
        const double saved = x;
        x = saved + h;
        const double up = loss_fn().item();
        x = saved - h;
        const double down = loss_fn().item();
        x = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic.data()[flat];
        const double scale = std::max(std::abs(a), std::abs(numeric));
        const double err = scale < zero_floor ? 0.0 : std::abs(a - numeric) / scale;
        out.max_rel_error = std::max(out.max_rel_error, err);
        out.max_abs_gradient = std::max(out.max_abs_gradient, std::abs(a));
        ++out.entries;
    }
    return out;
}

inline ag::Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    ag::Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

}  // namespace distill::testing
