#include "leaf/blocks.hpp"
#include "support/gradcheck.hpp"

#include <gtest/gtest.h>

namespace leaf {
namespace {

using test::leaf_var;
using test::random_tensor;

Tensor transpose_hw(const Tensor& x) {
    const Index C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor out({C, W, H});
    for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < H; ++i)
            for (Index j = 0; j < W; ++j) out.at(c, j, i) = x.at(c, i, j);
    return out;
}

Tensor rotate180(const Tensor& x) {
    const Index C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor out(x.shape());
    for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < H; ++i)
            for (Index j = 0; j < W; ++j) out.at(c, H - 1 - i, W - 1 - j) = x.at(c, i, j);
    return out;
}

std::vector<Var> all_params(const ParamStore& s) {
    std::vector<Var> v;
    for (const auto& p : s.params()) v.push_back(p.var);
    return v;
}

TEST(LayerNormBlock, ConstantInputGivesShift) {
    ParamStore store;
    LayerNorm ln = LayerNorm::create(Scope(store, ""), 3);
    ln.beta.mutable_value() = Tensor::from({3}, {0.5, -1, 2});
    const Tensor y = ln(constant(Tensor::full({3, 2, 2}, 7))).value();
    for (Index c = 0; c < 3; ++c)
        for (Index p = 0; p < 4; ++p) EXPECT_NEAR(y[c * 4 + p], ln.beta.value()[c], 1e-12);
}

TEST(LayerNormBlock, GradientCheck) {
    ParamStore store;
    LayerNorm ln = LayerNorm::create(Scope(store, ""), 4);
    ln.gamma.mutable_value() = random_tensor({4}, 1);
    ln.beta.mutable_value() = random_tensor({4}, 2);
    Var x = leaf_var({4, 3, 3}, 3);
    const auto r = test::gradcheck([&] { return test::probe(ln(x)); }, {x, ln.gamma, ln.beta});
    EXPECT_LT(r.rel_error, test::kOpGradTol);
}

TEST(MswSs2d, ZeroInputGivesZeroOutput) {
    ParamStore store;
    Init init(1);
    const ScanMixer mixer = ScanMixer::create(Scope(store, ""), 3, 4, MixerScan{}, init);
    const Tensor y = mixer(constant(Tensor::zeros({3, 8, 8}))).value();
    EXPECT_EQ(y.shape(), (Shape{3, 8, 8}));
    for (auto v : y.data()) EXPECT_EQ(v, 0);
}

TEST(MswSs2d, RejectsNonPowerOfTwoWindows) {
    ParamStore store;
    Init init(1);
    MixerScan scan;
    scan.windows = {1, 3, 4, 8};
    const ScanMixer mixer = ScanMixer::create(Scope(store, ""), 2, 2, scan, init);
    EXPECT_THROW(mixer(constant(Tensor::zeros({2, 8, 8}))), ConfigError);
}

TEST(MswSs2d, IdenticalLtiBranchesEqualSumOfDirectionalConvolutions) {
    const Index C = 2, N = 3, H = 8, W = 8, L = H * W;
    const Tensor a = Tensor::from({C, N}, {-0.5, -1.0, -2.0, -0.3, -0.7, -1.5});
    const Tensor d = Tensor::from({C}, {0.7, -0.2});
    const Tensor b0 = random_tensor({N}, 5), c0 = random_tensor({N}, 6);
    Tensor b({N, L}), c({N, L}), delta({C, L});
    for (Index t = 0; t < L; ++t) {
        for (Index n = 0; n < N; ++n) {
            b.at(n, t) = b0[n];
            c.at(n, t) = c0[n];
        }
        delta.at(0, t) = 0.2;
        delta.at(1, t) = 0.05;
    }
    const Tensor x = random_tensor({C, H, W}, 7);
    MixerScan scan;
    scan.windows = {1, 1, 1, 1};
    const auto perms = mixer_permutations(scan, H, W);
    const Tensor got = msw_ss2d(constant(x), perms, [&](const Var& seq, std::size_t) {
                           return selective_scan(constant(a), constant(d),
                                                 {seq, constant(b), constant(c), constant(delta)});
                       }).value();

    // H, HF, V, VF raster orders composed by hand with the convolution oracle.
    Tensor want({C, H, W});
    for (int dir = 0; dir < 4; ++dir) {
        std::vector<Index> order;
        for (Index k = 0; k < L; ++k) {
            const Index i = dir < 2 ? k / W : k % H;
            const Index j = dir < 2 ? k % W : k / H;
            order.push_back(i * W + j);
        }
        if (dir % 2 == 1) std::reverse(order.begin(), order.end());
        Tensor seq({C, L});
        for (Index ch = 0; ch < C; ++ch)
            for (Index k = 0; k < L; ++k) seq.at(ch, k) = x[ch * L + order[static_cast<std::size_t>(k)]];
        const Tensor y = selective_scan_conv(a, d, seq, b, c, delta);
        for (Index ch = 0; ch < C; ++ch)
            for (Index k = 0; k < L; ++k) want[ch * L + order[static_cast<std::size_t>(k)]] += y.at(ch, k);
    }
    EXPECT_LT(max_abs_diff(got, want), 1e-10);
}

TEST(MswSs2d, TransposeCovarianceSwapsHorizontalAndVerticalBranches) {
    ParamStore store;
    Init init(11);
    MixerScan scan;
    scan.windows = {1, 1, 1, 1};
    const ScanMixer mixer = ScanMixer::create(Scope(store, ""), 3, 2, scan, init);
    ScanMixer swapped = mixer;
    swapped.branches = {mixer.branches[2], mixer.branches[3], mixer.branches[0], mixer.branches[1]};
    const Tensor x = random_tensor({3, 8, 8}, 12);
    const Tensor lhs = swapped(constant(transpose_hw(x))).value();
    const Tensor rhs = transpose_hw(mixer(constant(x)).value());
    EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(MswSs2d, HalfTurnCovarianceSwapsFlippedBranches) {
    ParamStore store;
    Init init(13);
    MixerScan scan;
    scan.windows = {1, 1, 1, 1};
    const ScanMixer mixer = ScanMixer::create(Scope(store, ""), 3, 2, scan, init);
    ScanMixer swapped = mixer;
    swapped.branches = {mixer.branches[1], mixer.branches[0], mixer.branches[3], mixer.branches[2]};
    const Tensor x = random_tensor({3, 8, 8}, 14);
    const Tensor lhs = swapped(constant(rotate180(x))).value();
    const Tensor rhs = rotate180(mixer(constant(x)).value());
    EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(MixerSwap, AllScanKindsShareOneInterface) {
    for (ScanKind k : {ScanKind::MultiScaleWindow, ScanKind::SS2D, ScanKind::Continuous, ScanKind::FixedWindow}) {
        ParamStore store;
        Init init(2);
        BlockConfig cfg;
        cfg.channels = 4;
        cfg.mixer.kind = k;
        cfg.state_dim = 2;
        const SsmBlock block = SsmBlock::create(Scope(store, ""), cfg, init);
        EXPECT_EQ(block(constant(random_tensor({4, 8, 8}, 3))).value().shape(), (Shape{4, 8, 8}));
    }
}

TEST(SsmBlockTest, ShapePreservedOn16x16x8) {
    ParamStore store;
    Init init(3);
    BlockConfig cfg;
    cfg.channels = 8;
    const SsmBlock block = SsmBlock::create(Scope(store, ""), cfg, init);
    EXPECT_EQ(block(constant(random_tensor({8, 16, 16}, 4))).value().shape(), (Shape{8, 16, 16}));
}

TEST(SsmBlockTest, ZeroedWeightsGiveIdentity) {
    ParamStore store;
    Init init(3);
    BlockConfig cfg;
    cfg.channels = 4;
    const SsmBlock block = SsmBlock::create(Scope(store, ""), cfg, init);
    for (auto& p : store.params()) p.var.mutable_value().fill(0);
    const Tensor x = random_tensor({4, 8, 8}, 5);
    EXPECT_EQ(block(constant(x)).value(), x);
}

TEST(SsmBlockTest, EveryParameterReceivesGradient) {
    ParamStore store;
    Init init(4);
    BlockConfig cfg;
    cfg.channels = 4;
    cfg.state_dim = 3;
    const SsmBlock block = SsmBlock::create(Scope(store, ""), cfg, init);
    backward(test::probe(block(constant(random_tensor({4, 8, 8}, 6)))));
    for (const auto& p : store.params()) {
        double norm = 0;
        for (auto g : p.var.grad().data()) norm += std::abs(g);
        EXPECT_GT(norm, 0) << p.name;
    }
}

TEST(SsmBlockTest, GradientCheck) {
    ParamStore store;
    Init init(5);
    BlockConfig cfg;
    cfg.channels = 2;
    cfg.state_dim = 2;
    cfg.mixer.windows = {1, 2, 2, 2};
    const SsmBlock block = SsmBlock::create(Scope(store, ""), cfg, init);
    Var x = leaf_var({2, 4, 4}, 7);
    auto vars = all_params(store);
    vars.push_back(x);
    const auto r = test::gradcheck([&] { return test::probe(block(x)); }, vars);
    EXPECT_LT(r.rel_error, test::kOpGradTol);
}

TEST(CbamTest, GatesInUnitIntervalAndMagnitudeShrinks) {
    ParamStore store;
    Init init(6);
    const Cbam cbam = Cbam::create(Scope(store, ""), 8, 4, init);
    const Var x = constant(random_tensor({8, 6, 6}, 8, -3, 3));
    const Tensor channel = cbam.channel_gate(x).value();
    for (auto v : channel.data()) {
        EXPECT_GT(v, 0);
        EXPECT_LT(v, 1);
    }
    const Tensor spatial = cbam.spatial_gate(x).value();
    for (auto v : spatial.data()) {
        EXPECT_GT(v, 0);
        EXPECT_LT(v, 1);
    }
    const Tensor y = cbam(x).value();
    ASSERT_EQ(y.shape(), x.shape());
    for (Index i = 0; i < y.size(); ++i) EXPECT_LE(std::abs(y[i]), std::abs(x.value()[i]));
    EXPECT_THROW(Cbam::create(Scope(store, "bad."), 2, 4, init), ConfigError);
}

TEST(CbamTest, GradientCheck) {
    ParamStore store;
    Init init(7);
    const Cbam cbam = Cbam::create(Scope(store, ""), 4, 2, init);
    Var x = leaf_var({4, 5, 5}, 9);
    auto vars = all_params(store);
    vars.push_back(x);
    const auto r = test::gradcheck([&] { return test::probe(cbam(x)); }, vars);
    EXPECT_LT(r.rel_error, test::kOpGradTol);
}

}  // namespace
}  // namespace leaf
