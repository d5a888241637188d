#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lsconf/autodiff.hpp"

namespace lsconf::testing {

struct GradCheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
};

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences over every element of `params` (or `samples` random elements
/// when nonzero). The relative error denominator is floored at `floor` so that
/// near-zero gradients are compared on an absolute scale.
inline GradCheckResult check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                       double h = 1e-5, std::size_t samples = 0, std::uint64_t seed = 0,
                                       double floor = 1e-4)
{
    for (auto& p : params) p.zero_grad();
    {
        Tape tape;
        Tape::Scope scope(tape);
        tape.backward(f());
    }
    std::vector<NdArray> analytic;
    for (const auto& p : params) analytic.push_back(p.has_grad() ? p.grad() : NdArray(p.shape(), 0.0));

    std::vector<std::pair<std::size_t, std::size_t>> picks;
    for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t i = 0; i < params[k].size(); ++i) picks.emplace_back(k, i);
    if (samples != 0 && samples < picks.size()) {
        std::mt19937_64 rng(seed);
        std::shuffle(picks.begin(), picks.end(), rng);
        picks.resize(samples);
    }

    GradCheckResult r;
    for (auto [k, i] : picks) {
        double& v = params[k].mutable_value()[i];
        const double orig = v;
        v = orig + h;
        const double fp = f().item();
        v = orig - h;
        const double fm = f().item();
        v = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[k][i];
        const double err = std::abs(a - numeric);
        r.max_abs_error = std::max(r.max_abs_error, err);
        r.max_rel_error = std::max(r.max_rel_error, err / std::max({std::abs(a), std::abs(numeric), floor}));
        ++r.checked;
    }
    return r;
}

inline NdArray random_array(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    NdArray a(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : a.storage()) v = u(rng);
    return a;
}

/// sum(x * w) with a fixed random weight, so every output element matters.
inline Tensor weighted_sum(const Tensor& x, const NdArray& w) { return sum(mul(x, Tensor(w))); }

}  // namespace lsconf::testing
