#include "leaf/network.hpp"
#include "support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

namespace leaf {
namespace {

using test::random_tensor;

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.input_size = 8;
    cfg.stem_stride = 1;
    cfg.channels = {2, 2, 2, 2};
    cfg.csop = CsopConfig{2, 2, 4};
    cfg.decoder_channels = 2;
    cfg.cbam_reduction = 2;
    cfg.state_dim = 2;
    cfg.seed = 5;
    return cfg;
}

Tensor blob_gt(Index size, Index lo, Index hi) {
    Tensor g({1, size, size});
    for (Index i = lo; i < hi; ++i)
        for (Index j = lo; j < hi; ++j) g.at(0, i, j) = 1;
    return g;
}

// Straight-line transcription of the boundary-weighted BCE + IoU loss.
double reference_ppa(const Tensor& pred, const Tensor& gt) {
    const Index H = gt.dim(1), W = gt.dim(2);
    double w_sum = 0, bce = 0, inter = 0, uni = 0;
    for (Index i = 0; i < H; ++i)
        for (Index j = 0; j < W; ++j) {
            double pooled = 0;
            for (Index di = -7; di <= 7; ++di)
                for (Index dj = -7; dj <= 7; ++dj) {
                    const Index y = i + di, x = j + dj;
                    if (y >= 0 && y < H && x >= 0 && x < W) pooled += gt.at(0, y, x);
                }
            pooled /= 225.0;
            const double g = gt.at(0, i, j);
            const double w = 1 + 5 * std::abs(pooled - g);
            const double p = std::clamp<double>(pred.at(0, i, j), 1e-7, 1 - 1e-7);
            w_sum += w;
            bce += -w * (g * std::log(p) + (1 - g) * std::log(1 - p));
            inter += p * g * w;
            uni += (p + g) * w;
        }
    return bce / w_sum + 1 - (inter + 1) / (uni - inter + 1);
}

TEST(LeafModelTest, ShapeTraceAt64) {
    ModelConfig cfg;
    const LeafModel model(cfg);
    Var r = constant(random_tensor({3, 64, 64}, 1, 0, 1));
    Var d = constant(random_tensor({3, 64, 64}, 2, 0, 1));
    const Index sizes[] = {16, 8, 4, 2};
    for (int i = 0; i < 4; ++i) {
        auto [f_r, f_d] = model.encoder_stage(i, r, d);
        EXPECT_EQ(f_r.shape(), (Shape{cfg.channels[i], sizes[i], sizes[i]})) << "stage " << i;
        EXPECT_EQ(f_d.shape(), f_r.shape());
        const AfmOutput a = model.fuse_stage(i, f_r, f_d);
        EXPECT_EQ(a.fused.shape(), f_r.shape());
        r = a.f_r;
        d = a.f_d;
    }
}

TEST(LeafModelTest, SideOutputsAreProbabilityMapsAtInputResolution) {
    const LeafModel model(ModelConfig{});
    const Predictions p = model.forward(random_tensor({3, 64, 64}, 3, 0, 1), random_tensor({1, 64, 64}, 4, 0, 1));
    for (const Var& m : p.p) {
        ASSERT_EQ(m.shape(), (Shape{1, 64, 64}));
        for (Index i = 0; i < m.size(); ++i) {
            EXPECT_GT(m.value()[i], 0);
            EXPECT_LT(m.value()[i], 1);
        }
    }
}

TEST(LeafModelTest, SingleChannelDepthIsReplicated) {
    const LeafModel model(tiny_config());
    const Tensor rgb = random_tensor({3, 8, 8}, 5, 0, 1);
    const Tensor depth = random_tensor({1, 8, 8}, 6, 0, 1);
    Tensor depth3({3, 8, 8});
    for (Index c = 0; c < 3; ++c)
        for (Index i = 0; i < 64; ++i) depth3[c * 64 + i] = depth[i];
    EXPECT_EQ(model.forward(rgb, depth).final_map().value(), model.forward(rgb, depth3).final_map().value());
    EXPECT_THROW(model.forward(rgb, Tensor::zeros({2, 8, 8})), ShapeError);
    EXPECT_THROW(model.forward(Tensor::zeros({3, 16, 16}), depth), ShapeError);
}

TEST(LeafModelTest, SameSeedIsBitIdenticalAndSeedMatters) {
    const Tensor rgb = random_tensor({3, 64, 64}, 7, 0, 1);
    const Tensor depth = random_tensor({1, 64, 64}, 8, 0, 1);
    ModelConfig cfg;
    cfg.seed = 11;
    const LeafModel a(cfg), b(cfg);
    cfg.seed = 12;
    const LeafModel c(cfg);
    const Tensor pa = a.forward(rgb, depth).final_map().value();
    EXPECT_EQ(pa, b.forward(rgb, depth).final_map().value());
    EXPECT_NE(pa, c.forward(rgb, depth).final_map().value());
}

TEST(LeafModelTest, InvalidConfigurationsAreRejected) {
    ModelConfig cfg;
    cfg.input_size = 48;
    EXPECT_THROW(LeafModel{cfg}, ConfigError);
    cfg = ModelConfig{};
    cfg.afm_paths = 2;
    EXPECT_THROW(LeafModel{cfg}, ConfigError);
    cfg = ModelConfig{};
    cfg.decoder_channels = 2;
    EXPECT_THROW(LeafModel{cfg}, ConfigError);
}

TEST(LeafModelTest, AblationTogglesChangeOnlyTheirComponent) {
    auto names = [](const ModelConfig& cfg) {
        const LeafModel m(cfg);
        std::set<std::string> out;
        for (const auto& p : m.params().params()) out.insert(p.name);
        return out;
    };
    ModelConfig full;
    ModelConfig no_afm = full;
    no_afm.afm = false;
    ModelConfig plain = full;
    plain.mixer.kind = ScanKind::SS2D;
    const auto n_full = names(full), n_no_afm = names(no_afm);
    for (const auto& n : n_no_afm) EXPECT_TRUE(n_full.count(n)) << n;
    for (const auto& n : n_full)
        if (!n_no_afm.count(n)) EXPECT_EQ(n.rfind("afm", 0), 0u) << n;
    EXPECT_LT(n_no_afm.size(), n_full.size());
    EXPECT_EQ(names(plain), n_full);

    const LeafModel bypass(no_afm);
    const Var f_r = constant(random_tensor({8, 16, 16}, 9));
    const Var f_d = constant(random_tensor({8, 16, 16}, 10));
    EXPECT_EQ(bypass.fuse_stage(0, f_r, f_d).f_r.value(), f_r.value());
}

TEST(LeafModelTest, EveryParameterReceivesGradient) {
    // At 16x16 the coarsest stage is 2x2, so every scan has more than one step
    // and the state matrices influence the output.
    ModelConfig cfg = tiny_config();
    cfg.input_size = 16;
    const LeafModel model(cfg);
    const Predictions p = model.forward(random_tensor({3, 16, 16}, 12, 0, 1), random_tensor({1, 16, 16}, 13, 0, 1));
    backward(deep_supervision_loss(p, blob_gt(16, 4, 12)));
    for (const auto& q : model.params().params()) {
        double norm = 0;
        const Tensor g = q.var.grad();
        for (auto v : g.data()) norm += std::abs(v);
        EXPECT_GT(norm, 0) << q.name;
    }
}

TEST(LeafModelTest, EndToEndGradientCheck) {
    const LeafModel model(tiny_config());
    const Tensor rgb = random_tensor({3, 8, 8}, 14, 0, 1);
    const Tensor depth = random_tensor({1, 8, 8}, 15, 0, 1);
    const Tensor gt = blob_gt(8, 2, 6);
    std::vector<Var> params;
    for (const auto& q : model.params().params()) params.push_back(q.var);
    const auto r = test::gradcheck([&] { return deep_supervision_loss(model.forward(rgb, depth), gt); }, params,
                                   test::kModelFdStep);
    EXPECT_LT(r.rel_error, test::kModelGradTol);
    EXPECT_GT(r.analytic_norm, 0);
}

TEST(PpaLoss, BoundaryWeightsAreOneInsideAndAboveOneAtEdges) {
    const Tensor gt = blob_gt(48, 8, 40);
    const Tensor w = ppa_weights(gt);
    EXPECT_NEAR(w.at(0, 24, 24), 1.0, 1e-12);
    EXPECT_GT(w.at(0, 8, 24), 1.0);
    EXPECT_GT(w.at(0, 7, 24), 1.0);
    for (auto v : ppa_weights(Tensor::zeros({1, 20, 20})).data()) EXPECT_EQ(v, 1);
}

TEST(PpaLoss, MatchesReferenceTranscription) {
    const Tensor gt = blob_gt(20, 5, 13);
    for (std::uint64_t seed : {1, 2, 3}) {
        const Tensor pred = random_tensor({1, 20, 20}, seed, 0.01, 0.99);
        EXPECT_NEAR(ppa_loss(constant(pred), gt).value()[0], reference_ppa(pred, gt), 1e-12);
    }
}

TEST(PpaLoss, PerfectPredictionIsNearZero) {
    const Tensor gt = blob_gt(16, 4, 10);
    EXPECT_LT(ppa_loss(constant(gt), gt).value()[0], 1e-5);
    EXPECT_NEAR(ppa_loss(constant(gt), gt).value()[0], reference_ppa(gt, gt), 1e-12);
}

TEST(PpaLoss, RejectsNonBinaryOrMismatchedGroundTruth) {
    EXPECT_THROW(ppa_loss(constant(Tensor::full({1, 4, 4}, 0.5)), Tensor::full({1, 4, 4}, 0.5)), ContractError);
    EXPECT_THROW(ppa_loss(constant(Tensor::zeros({1, 4, 4})), Tensor::zeros({1, 4, 5})), ShapeError);
}

TEST(PpaLoss, GradientCheck) {
    const Tensor gt = blob_gt(10, 2, 7);
    Var p = test::leaf_var({1, 10, 10}, 4, 0.05, 0.95);
    const auto r = test::gradcheck([&] { return ppa_loss(p, gt); }, {p});
    EXPECT_LT(r.rel_error, test::kOpGradTol);
}

TEST(DeepSupervision, UniformSumOfSideLosses) {
    const LeafModel model(tiny_config());
    const Predictions p = model.forward(random_tensor({3, 8, 8}, 16, 0, 1), random_tensor({1, 8, 8}, 17, 0, 1));
    const Tensor gt = blob_gt(8, 1, 5);
    double want = 0;
    for (const Var& m : p.p) want += reference_ppa(m.value(), gt);
    EXPECT_NEAR(deep_supervision_loss(p, gt).value()[0], want, 1e-12);
}

TEST(DeepSupervision, EachSideOutputCarriesItsOwnGradient) {
    const LeafModel model(tiny_config());
    const Predictions p = model.forward(random_tensor({3, 8, 8}, 18, 0, 1), random_tensor({1, 8, 8}, 19, 0, 1));
    const Tensor gt = blob_gt(8, 2, 6);
    // Losing any one side term changes the parameter gradient.
    backward(deep_supervision_loss(p, gt));
    std::vector<Tensor> full;
    for (const auto& q : model.params().params()) full.push_back(q.var.grad());
    for (int drop = 0; drop < 4; ++drop) {
        for (auto q : model.params().params()) q.var.zero_grad();
        const Predictions p2 = model.forward(random_tensor({3, 8, 8}, 18, 0, 1), random_tensor({1, 8, 8}, 19, 0, 1));
        Var total;
        for (int i = 0; i < 4; ++i) {
            if (i == drop) continue;
            total = total ? total + ppa_loss(p2.p[i], gt) : ppa_loss(p2.p[i], gt);
        }
        backward(total);
        double diff = 0;
        std::size_t k = 0;
        for (const auto& q : model.params().params()) diff += max_abs_diff(q.var.grad(), full[k++]);
        EXPECT_GT(diff, 0) << "side output " << drop;
    }
}

}  // namespace
}  // namespace leaf
