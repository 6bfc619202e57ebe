#include "leaf/blocks.hpp"

namespace leaf {

LayerNorm LayerNorm::create(const Scope& scope, Index channels) {
    return {scope.add("gamma", Tensor::ones({channels})), scope.add("beta", Tensor::zeros({channels}))};
}

Linear Linear::create(const Scope& scope, Index in, Index out, Init& init, bool bias) {
    Linear l;
    l.w = scope.add("w", init.fan_in({out, in}, in));
    if (bias) l.b = scope.add("b", Tensor::zeros({out}));
    return l;
}

Conv2d Conv2d::create(const Scope& scope, Index in, Index out, Index kernel, Conv2dOptions opt, Init& init) {
    const Index in_g = in / opt.groups;
    Conv2d c;
    c.w = scope.add("w", init.fan_in({out, in_g, kernel, kernel}, in_g * kernel * kernel));
    c.b = scope.add("b", Tensor::zeros({out, 1, 1}));
    c.opt = opt;
    return c;
}

Var Conv2d::operator()(const Var& x) const { return conv2d(x, w, opt) + b; }

Var msw_ss2d(const Var& x, std::span<const ScanPermutation> perms, const BranchFn& branch) {
    if (x.value().rank() != 3) throw ShapeError("msw_ss2d expects [C,H,W], got " + shape_str(x.shape()));
    const Index H = x.dim(1);
    const Index W = x.dim(2);
    Var out;
    for (std::size_t i = 0; i < perms.size(); ++i) {
        Var y = scatter(branch(gather(x, perms[i]), i), perms[i], H, W);
        out = out ? out + y : y;
    }
    return out;
}

ScanMixer ScanMixer::create(const Scope& scope, Index channels, Index state_dim, MixerScan scan, Init& init) {
    ScanMixer m;
    m.scan = scan;
    for (std::size_t i = 0; i < m.branches.size(); ++i) {
        m.branches[i] = SsmParams::create(scope.child("branch" + std::to_string(i)), channels, state_dim, init);
    }
    return m;
}

Var ScanMixer::operator()(const Var& x) const {
    if (scan.kind == ScanKind::MultiScaleWindow) {
        for (Index w : scan.windows) {
            if (w <= 0 || (w & (w - 1)) != 0) throw ConfigError("scan windows must be powers of two");
        }
    }
    const auto perms = mixer_permutations(scan, x.dim(1), x.dim(2));
    return msw_ss2d(x, perms, [this](const Var& seq, std::size_t i) { return s6_branch(seq, branches[i]); });
}

SsmBlock SsmBlock::create(const Scope& scope, const BlockConfig& cfg, Init& init) {
    if (cfg.channels <= 0) throw ConfigError("block channels must be positive");
    if (cfg.expansion < 1) throw ConfigError("block MLP expansion must be >= 1");
    const Index C = cfg.channels;
    const Index E = cfg.expand * C;
    const Index hidden = static_cast<Index>(static_cast<Real>(C) * cfg.expansion);
    SsmBlock b;
    b.cfg = cfg;
    b.norm1 = LayerNorm::create(scope.child("norm1"), C);
    b.in_proj = Linear::create(scope.child("in_proj"), C, 2 * E, init);
    b.dw_w = scope.add("dw.w", init.fan_in({E, 1, 3, 3}, 9));
    b.dw_b = scope.add("dw.b", Tensor::zeros({E, 1, 1}));
    b.mixer = ScanMixer::create(scope.child("mixer"), E, cfg.state_dim, cfg.mixer, init);
    b.out_norm = LayerNorm::create(scope.child("out_norm"), E);
    b.out_proj = Linear::create(scope.child("out_proj"), E, C, init);
    b.norm2 = LayerNorm::create(scope.child("norm2"), C);
    b.fc1 = Linear::create(scope.child("fc1"), C, hidden, init);
    b.fc2 = Linear::create(scope.child("fc2"), hidden, C, init);
    return b;
}

Var SsmBlock::operator()(const Var& x) const {
    const Index E = dw_w.dim(0);
    Var xz = in_proj(norm1(x));
    Var xs = slice(xz, 0, E);
    Var z = slice(xz, E, 2 * E);
    xs = silu(conv2d(xs, dw_w, {1, 1, E}) + dw_b);
    Var ys = out_norm(mixer(xs)) * silu(z);
    Var x1 = x + out_proj(ys);
    return x1 + fc2(silu(fc1(norm2(x1))));
}

Cbam Cbam::create(const Scope& scope, Index channels, Index reduction, Init& init) {
    if (reduction <= 0 || channels < reduction) {
        throw ConfigError("CBAM needs channels (" + std::to_string(channels) + ") >= reduction ratio (" +
                          std::to_string(reduction) + ")");
    }
    const Index hidden = channels / reduction;
    Cbam c;
    c.fc1 = Linear::create(scope.child("fc1"), channels, hidden, init);
    c.fc2 = Linear::create(scope.child("fc2"), hidden, channels, init);
    c.spatial = Conv2d::create(scope.child("spatial"), 2, 1, 7, {1, 3, 1}, init);
    return c;
}

Var Cbam::channel_gate(const Var& x) const {
    const Index C = x.dim(0);
    Var avg = reshape(mean(x, {1, 2}), {C, 1});
    Var mx = reshape(max(x, {1, 2}), {C, 1});
    Var logits = fc2(relu(fc1(avg))) + fc2(relu(fc1(mx)));
    return reshape(sigmoid(logits), {C, 1, 1});
}

Var Cbam::spatial_gate(const Var& x) const {
    Var pooled = concat({mean(x, {0}), max(x, {0})});
    return sigmoid(spatial(pooled));
}

Var Cbam::operator()(const Var& x) const {
    Var xc = x * channel_gate(x);
    return xc * spatial_gate(xc);
}

}  // namespace leaf
