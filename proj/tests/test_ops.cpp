#include "leaf/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/op_cases.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace leaf {
namespace {

using test::check_case;
using test::grad_cases;
using test::GradCase;
using test::gradcheck;
using test::leaf_var;
using test::probe;
using test::random_tensor;

TEST(Tensor, RejectsBadShapesAndIndices) {
    EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
    EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<Real>{1, 2, 3}), ShapeError);
    Tensor t(Shape{2, 3});
    EXPECT_THROW(t.at(2, 0), ShapeError);
    EXPECT_THROW(t.at(0), ShapeError);
    EXPECT_THROW(t.reshaped({4}), ShapeError);
    t.at(1, 2) = 5;
    EXPECT_EQ(t[5], 5);
}

TEST(Tensor, BroadcastShapeFollowsTrailingAxes) {
    EXPECT_EQ(broadcast_shape({3, 1, 4}, {2, 1}), (Shape{3, 2, 4}));
    EXPECT_EQ(broadcast_shape({4}, {2, 3, 4}), (Shape{2, 3, 4}));
    EXPECT_THROW(broadcast_shape({3}, {4}), ShapeError);
}

TEST(Tensor, ReduceToShapeUndoesBroadcast) {
    const Tensor small = random_tensor({3, 1}, 1);
    const Tensor big = broadcast_to(small, {2, 3, 4});
    const Tensor back = reduce_to_shape(big, {3, 1});
    for (Index i = 0; i < 3; ++i) EXPECT_NEAR(back[i], 8 * small[i], 1e-12);
}

TEST(Ops, BroadcastAddMatchesExplicitTiling) {
    const Var a = leaf_var({2, 3, 4}, 1);
    const Var b = leaf_var({3, 1}, 2);
    const Tensor got = add(a, b).value();
    const Tensor tiled = broadcast_to(b.value(), {2, 3, 4});
    for (Index i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], a.value()[i] + tiled[i]);
}

TEST(Ops, MatmulMatchesTripleLoop) {
    const Var a = leaf_var({3, 5}, 3);
    const Var b = leaf_var({5, 2}, 4);
    const Tensor c = matmul(a, b).value();
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 2; ++j) {
            double s = 0;
            for (Index k = 0; k < 5; ++k) s += a.value().at(i, k) * b.value().at(k, j);
            EXPECT_NEAR(c.at(i, j), s, 1e-12);
        }
    EXPECT_THROW(matmul(a, a), ShapeError);
}

Tensor naive_conv(const Tensor& x, const Tensor& w, Index stride, Index pad, Index groups) {
    const Index C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const Index O = w.dim(0), Cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const Index Ho = (H + 2 * pad - kh) / stride + 1;
    const Index Wo = (W + 2 * pad - kw) / stride + 1;
    const Index Og = O / groups;
    Tensor out({O, Ho, Wo});
    for (Index o = 0; o < O; ++o)
        for (Index oy = 0; oy < Ho; ++oy)
            for (Index ox = 0; ox < Wo; ++ox) {
                double s = 0;
                const Index g = o / Og;
                for (Index c = 0; c < Cg; ++c)
                    for (Index ky = 0; ky < kh; ++ky)
                        for (Index kx = 0; kx < kw; ++kx) {
                            const Index iy = oy * stride - pad + ky;
                            const Index ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            s += x.at(g * Cg + c, iy, ix) * w.at(o, c, ky, kx);
                        }
                out.at(o, oy, ox) = static_cast<Real>(s);
            }
    (void)C;
    return out;
}

TEST(Ops, Conv2dMatchesDirectLoops) {
    struct Case {
        Index cin, cout, k, stride, pad, groups, size;
    };
    for (const Case c : {Case{3, 4, 3, 1, 1, 1, 8}, Case{4, 6, 3, 2, 1, 2, 7}, Case{4, 4, 3, 1, 1, 4, 8},
                         Case{3, 5, 4, 4, 0, 1, 8}, Case{2, 2, 7, 1, 3, 1, 8}}) {
        const Tensor x = random_tensor({c.cin, c.size, c.size}, 5);
        const Tensor w = random_tensor({c.cout, c.cin / c.groups, c.k, c.k}, 6);
        const Tensor got = conv2d(constant(x), constant(w), {c.stride, c.pad, c.groups}).value();
        const Tensor want = naive_conv(x, w, c.stride, c.pad, c.groups);
        ASSERT_EQ(got.shape(), want.shape());
        EXPECT_LT(max_abs_diff(got, want), 1e-12) << c.cin << " " << c.cout << " g=" << c.groups;
    }
}

TEST(Ops, PoolingMatchesDirectLoops) {
    const Tensor x = random_tensor({2, 6, 6}, 7);
    const Tensor avg = avgpool2d(constant(x), 3, 1, 1).value();
    const Tensor mx = maxpool2d(constant(x), 3, 1, 1).value();
    for (Index c = 0; c < 2; ++c)
        for (Index i = 0; i < 6; ++i)
            for (Index j = 0; j < 6; ++j) {
                double s = 0;
                double best = -1e300;
                for (Index di = -1; di <= 1; ++di)
                    for (Index dj = -1; dj <= 1; ++dj) {
                        const Index y = i + di, z = j + dj;
                        if (y < 0 || y >= 6 || z < 0 || z >= 6) continue;
                        s += x.at(c, y, z);
                        best = std::max(best, static_cast<double>(x.at(c, y, z)));
                    }
                EXPECT_NEAR(avg.at(c, i, j), s / 9.0, 1e-12);
                EXPECT_EQ(mx.at(c, i, j), best);
            }
    EXPECT_THROW(avgpool2d(constant(x), 4, 3, 0), ShapeError);
}

TEST(Ops, AdaptivePoolUsesFloorCeilBins) {
    const Tensor x = random_tensor({1, 5, 7}, 8);
    const Tensor got = adaptive_avgpool2d(constant(x), 3, 2).value();
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 2; ++j) {
            const Index y0 = i * 5 / 3, y1 = ((i + 1) * 5 + 2) / 3;
            const Index x0 = j * 7 / 2, x1 = ((j + 1) * 7 + 1) / 2;
            double s = 0;
            for (Index y = y0; y < y1; ++y)
                for (Index z = x0; z < x1; ++z) s += x.at(0, y, z);
            EXPECT_NEAR(got.at(0, i, j), s / static_cast<double>((y1 - y0) * (x1 - x0)), 1e-12);
        }
}

TEST(Ops, ResizeNearestAndBilinear) {
    const Tensor x = Tensor::from({1, 2, 2}, {0, 1, 2, 3});
    const Tensor nn = resize2d(constant(x), 4, 4, Interp::Nearest).value();
    EXPECT_EQ(nn.at(0, 0, 0), 0);
    EXPECT_EQ(nn.at(0, 1, 1), 0);
    EXPECT_EQ(nn.at(0, 2, 3), 3);
    const Tensor bl = resize2d(constant(x), 4, 4, Interp::Bilinear).value();
    // Half-pixel centers: output 1 maps to source 0.25, output 0 clamps to 0.
    EXPECT_NEAR(bl.at(0, 0, 0), 0.0, 1e-12);
    EXPECT_NEAR(bl.at(0, 0, 1), 0.25, 1e-12);
    EXPECT_NEAR(bl.at(0, 1, 1), 0.25 + 2 * 0.25, 1e-12);
    EXPECT_NEAR(bl.at(0, 3, 3), 3.0, 1e-12);
}

TEST(Ops, SpaceToChannelLayout) {
    Tensor x({1, 4, 4});
    for (Index i = 0; i < 16; ++i) x[i] = static_cast<Real>(i);
    const Tensor y = space_to_channel(constant(x), 2).value();
    ASSERT_EQ(y.shape(), (Shape{4, 2, 2}));
    EXPECT_EQ(y.at(0, 0, 0), 0);
    EXPECT_EQ(y.at(1, 0, 0), 1);
    EXPECT_EQ(y.at(2, 0, 0), 4);
    EXPECT_EQ(y.at(3, 1, 1), 15);
}

TEST(Ops, LayerNormNormalizesEachPosition) {
    const Var x = leaf_var({5, 2, 3}, 9);
    const Var y = layer_norm_channels(x, constant(Tensor::ones({5})), constant(Tensor::zeros({5})));
    for (Index p = 0; p < 6; ++p) {
        double m = 0, v = 0, mx = 0, vx = 0;
        for (Index c = 0; c < 5; ++c) {
            m += y.value()[c * 6 + p];
            mx += x.value()[c * 6 + p];
        }
        m /= 5;
        mx /= 5;
        for (Index c = 0; c < 5; ++c) {
            v += std::pow(y.value()[c * 6 + p] - m, 2);
            vx += std::pow(x.value()[c * 6 + p] - mx, 2);
        }
        EXPECT_NEAR(m, 0, 1e-12);
        EXPECT_NEAR(v / 5, (vx / 5) / (vx / 5 + 1e-5), 1e-12);
    }
}

TEST(Ops, SoftmaxRowsSumToOne) {
    const Tensor s = softmax(leaf_var({3, 4}, 10), 1).value();
    for (Index i = 0; i < 3; ++i) {
        double t = 0;
        for (Index j = 0; j < 4; ++j) t += s.at(i, j);
        EXPECT_NEAR(t, 1.0, 1e-12);
    }
}

TEST(Autodiff, BackwardRequiresScalarRoot) {
    const Var x = leaf_var({3}, 11);
    EXPECT_THROW(backward(x * x), ContractError);
}

TEST(Autodiff, LeavesAccumulateAcrossSweeps) {
    Var x(Tensor::from({1}, {3}), true);
    backward(x * x);
    backward(x * x);
    EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Autodiff, NoGradGuardSkipsRecording) {
    Var x(Tensor::from({1}, {2}), true);
    Var y;
    {
        NoGradGuard g;
        y = x * x;
    }
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE((x * x).requires_grad());
}

TEST(Autodiff, SharedSubexpressionGradient) {
    Var x(Tensor::from({1}, {1.5}), true);
    Var y = exp(x);
    backward(sum_all(y * y + y));
    EXPECT_NEAR(x.grad()[0], 2 * std::exp(3.0) + std::exp(1.5), 1e-12);
}

void PrintTo(const GradCase& c, std::ostream* os) { *os << c.name; }

class OpGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
    const GradCase& c = GetParam();
    const auto r = check_case(c);
    EXPECT_LT(r.rel_error, test::kOpGradTol) << c.name;
    EXPECT_GT(r.analytic_norm, 0) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::ValuesIn(grad_cases()),
                         [](const auto& info) { return std::string(info.param.name); });

}  // namespace
}  // namespace leaf
