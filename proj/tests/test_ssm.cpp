#include "leaf/ssm.hpp"
#include "support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace leaf {
namespace {

using test::leaf_var;
using test::random_tensor;

// Straight-line recurrence written from the defining equations.
Tensor reference_scan(const Tensor& a, const Tensor& d, const Tensor& x, const Tensor& b, const Tensor& c,
                      const Tensor& delta) {
    const Index ch = x.dim(0), L = x.dim(1), N = a.dim(1);
    Tensor y({ch, L});
    for (Index k = 0; k < ch; ++k) {
        std::vector<double> h(static_cast<std::size_t>(N), 0.0);
        for (Index t = 0; t < L; ++t) {
            double out = 0;
            for (Index n = 0; n < N; ++n) {
                const double dt = delta.at(k, t);
                h[n] = std::exp(dt * a.at(k, n)) * h[n] + dt * b.at(n, t) * x.at(k, t);
                out += c.at(n, t) * h[n];
            }
            y.at(k, t) = static_cast<Real>(out + d[k] * x.at(k, t));
        }
    }
    return y;
}

Tensor negative(Tensor t) {
    for (auto& v : t.data()) v = -std::abs(v) - Real(0.05);
    return t;
}

TEST(Discretize, ZeroOrderHoldEntries) {
    const Tensor a = Tensor::from({1, 2}, {-1, -2});
    const Tensor b = Tensor::from({2, 2}, {0.5, 1, 2, 3});
    const Tensor delta = Tensor::from({1, 2}, {0.1, 0.2});
    const Discretized z = discretize(a, b, delta);
    EXPECT_NEAR(z.a_bar.at(0, 1, 0), std::exp(-0.2), 1e-15);
    EXPECT_NEAR(z.a_bar.at(0, 0, 1), std::exp(-0.2), 1e-15);
    EXPECT_NEAR(z.b_bar.at(0, 1, 1), 0.2 * 3, 1e-15);
    EXPECT_THROW(discretize(a, b, Tensor::from({1, 2}, {0.1, 0.0})), ContractError);
    EXPECT_THROW(discretize(a, b, Tensor::from({2, 2}, {1, 1, 1, 1})), ShapeError);
}

TEST(SelectiveScan, MatchesReferenceRecurrence) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Index ch = 3, N = 4, L = 9;
        const Tensor a = negative(random_tensor({ch, N}, seed));
        const Tensor d = random_tensor({ch}, seed + 1);
        const Tensor x = random_tensor({ch, L}, seed + 2);
        const Tensor b = random_tensor({N, L}, seed + 3);
        const Tensor c = random_tensor({N, L}, seed + 4);
        const Tensor delta = random_tensor({ch, L}, seed + 5, 0.01, 0.5);
        const Tensor y =
            selective_scan(constant(a), constant(d), {constant(x), constant(b), constant(c), constant(delta)}).value();
        EXPECT_LT(max_abs_diff(y, reference_scan(a, d, x, b, c, delta)), 1e-13);
    }
}

TEST(SelectiveScan, RecurrenceEqualsConvolutionOnLtiInstances) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<Index> len(1, 32), states(1, 8), chans(1, 3);
    for (int trial = 0; trial < 100; ++trial) {
        const Index L = len(rng), N = states(rng), ch = chans(rng);
        const auto s = static_cast<std::uint64_t>(trial) * 11;
        const Tensor a = negative(random_tensor({ch, N}, s));
        const Tensor d = random_tensor({ch}, s + 1);
        const Tensor x = random_tensor({ch, L}, s + 2);
        Tensor b({N, L}), c({N, L}), delta({ch, L});
        const Tensor b0 = random_tensor({N}, s + 3), c0 = random_tensor({N}, s + 4);
        const Tensor dt0 = random_tensor({ch}, s + 5, 0.01, 0.5);
        for (Index t = 0; t < L; ++t) {
            for (Index n = 0; n < N; ++n) {
                b.at(n, t) = b0[n];
                c.at(n, t) = c0[n];
            }
            for (Index k = 0; k < ch; ++k) delta.at(k, t) = dt0[k];
        }
        const Tensor rec =
            selective_scan(constant(a), constant(d), {constant(x), constant(b), constant(c), constant(delta)}).value();
        const Tensor conv = selective_scan_conv(a, d, x, b, c, delta);
        EXPECT_LT(max_abs_diff(rec, conv), 1e-10) << "trial " << trial;
    }
}

TEST(SelectiveScan, ConvolutionRejectsTimeVaryingInputs) {
    const Tensor a = Tensor::from({1, 1}, {-1});
    const Tensor d = Tensor::from({1}, {1});
    const Tensor x = Tensor::from({1, 2}, {1, 2});
    const Tensor c = Tensor::from({1, 2}, {1, 1});
    const Tensor delta = Tensor::from({1, 2}, {0.1, 0.1});
    EXPECT_THROW(selective_scan_conv(a, d, x, Tensor::from({1, 2}, {1, 2}), c, delta), ContractError);
}

TEST(SelectiveScan, NonPositiveDeltaIsAContractError) {
    const Var a = constant(Tensor::from({1, 1}, {-1}));
    const Var d = constant(Tensor::from({1}, {1}));
    const Var x = constant(Tensor::from({1, 2}, {1, 2}));
    const Var b = constant(Tensor::from({1, 2}, {1, 1}));
    EXPECT_THROW(selective_scan(a, d, {x, b, b, constant(Tensor::from({1, 2}, {0.1, -0.1}))}), ContractError);
}

TEST(SelectiveScan, GradientsOfAllInputs) {
    const Index ch = 2, N = 3, L = 6;
    Var a(negative(random_tensor({ch, N}, 1)), true);
    Var d = leaf_var({ch}, 2);
    Var x = leaf_var({ch, L}, 3);
    Var b = leaf_var({N, L}, 4);
    Var c = leaf_var({N, L}, 5);
    Var delta = leaf_var({ch, L}, 6, 0.05, 0.5);
    const auto r = test::gradcheck([&] { return test::probe(selective_scan(a, d, {x, b, c, delta})); },
                                   {a, d, x, b, c, delta});
    EXPECT_LT(r.rel_error, test::kOpGradTol);
}

TEST(SsmParams, InitializationConventions) {
    ParamStore store;
    Init init(3);
    const SsmParams p = SsmParams::create(Scope(store, "s."), 4, 5, init);
    const Tensor a = realized_a(p).value();
    for (Index c = 0; c < 4; ++c)
        for (Index n = 0; n < 5; ++n) EXPECT_NEAR(a.at(c, n), -static_cast<double>(n + 1), 1e-12);
    for (Index c = 0; c < 4; ++c) {
        EXPECT_EQ(p.d.value()[c], 1);
        const double sp = std::log1p(std::exp(static_cast<double>(p.b_dt.value()[c])));
        EXPECT_GE(sp, 1e-3 - 1e-12);
        EXPECT_LE(sp, 1e-1 + 1e-12);
    }
}

TEST(SsmParams, BranchIsDifferentiableAndDeltaPositive) {
    ParamStore store;
    Init init(4);
    const SsmParams p = SsmParams::create(Scope(store, ""), 3, 2, init);
    Var x = leaf_var({3, 7}, 8);
    const Projections pr = project(p, x);
    for (auto v : pr.delta.value().data()) EXPECT_GT(v, 0);
    std::vector<Var> vars{x};
    for (const auto& q : store.params()) vars.push_back(q.var);
    const auto r = test::gradcheck([&] { return test::probe(s6_branch(x, p)); }, vars);
    EXPECT_LT(r.rel_error, test::kOpGradTol);
}

}  // namespace
}  // namespace leaf
