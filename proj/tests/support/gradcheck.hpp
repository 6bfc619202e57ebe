#pragma once

#include "leaf/ops.hpp"
#include "support/tolerances.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace leaf::test {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<Real>(u(rng));
    return t;
}

inline Var leaf_var(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    return Var(random_tensor(std::move(shape), seed, lo, hi), true);
}

/// Random linear functional of y so every output element contributes.
inline Var probe(const Var& y, std::uint64_t seed = 99) {
    return sum_all(y * constant(random_tensor(y.shape(), seed)));
}

struct GradReport {
    double rel_error = 0;
    double analytic_norm = 0;
    double numeric_norm = 0;
};

/// Norm-wise relative error ||a - n|| / max(||a||, ||n||) between the
/// reverse-mode gradient of f and central differences, over all inputs.
inline GradReport gradcheck(const std::function<Var()>& f, std::vector<Var> inputs, double h = kFdStep) {
    for (auto& v : inputs) v.zero_grad();
    backward(f());
    double diff2 = 0, a2 = 0, n2 = 0;
    for (auto& v : inputs) {
        const Tensor analytic = v.grad();
        auto data = v.mutable_value().data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const Real saved = data[i];
            double fp = 0;
            double fm = 0;
            {
                NoGradGuard guard;
                data[i] = static_cast<Real>(saved + h);
                fp = static_cast<double>(f().value()[0]);
                data[i] = static_cast<Real>(saved - h);
                fm = static_cast<double>(f().value()[0]);
            }
            data[i] = saved;
            const double numeric = (fp - fm) / (2 * h);
            const double a = static_cast<double>(analytic[static_cast<Index>(i)]);
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
    }
    GradReport r;
    r.analytic_norm = std::sqrt(a2);
    r.numeric_norm = std::sqrt(n2);
    const double scale = std::max(r.analytic_norm, r.numeric_norm);
    r.rel_error = scale == 0 ? 0 : std::sqrt(diff2) / scale;
    return r;
}

}  // namespace leaf::test
