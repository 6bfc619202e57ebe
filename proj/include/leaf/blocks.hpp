#pragma once

#include "leaf/params.hpp"
#include "leaf/scan_paths.hpp"
#include "leaf/ssm.hpp"

#include <array>
#include <functional>
#include <span>

namespace leaf {

struct LayerNorm {
    Var gamma;
    Var beta;

    static LayerNorm create(const Scope& scope, Index channels);
    Var operator()(const Var& x) const { return layer_norm_channels(x, gamma, beta); }
};

struct Linear {
    Var w;
    Var b;

    static Linear create(const Scope& scope, Index in, Index out, Init& init, bool bias = true);
    Var operator()(const Var& x) const { return linear_channels(x, w, b ? &b : nullptr); }
};

struct Conv2d {
    Var w;
    Var b;
    Conv2dOptions opt;

    static Conv2d create(const Scope& scope, Index in, Index out, Index kernel, Conv2dOptions opt, Init& init);
    Var operator()(const Var& x) const;
};

struct BlockConfig {
    Index channels = 8;
    MixerScan mixer{};
    Real expansion = 2;  // MLP hidden width ratio
    Index state_dim = 8;
    Index expand = 2;  // mixer inner width ratio
};

using BranchFn = std::function<Var(const Var& seq, std::size_t branch)>;

/// Sum over branches of scatter(branch(gather(x, p_i))) for x[C,H,W].
Var msw_ss2d(const Var& x, std::span<const ScanPermutation> perms, const BranchFn& branch);

/// Four directional S6 branches behind one scan strategy.
struct ScanMixer {
    MixerScan scan;
    std::array<SsmParams, 4> branches;

    static ScanMixer create(const Scope& scope, Index channels, Index state_dim, MixerScan scan, Init& init);
    Var operator()(const Var& x) const;
};

/// Transformer-shaped block with two residual modules:
///   x' = x + out_proj(LN(scan(SiLU(dwconv(in_x)))) * SiLU(in_z)), in = in_proj(LN(x))
///   y  = x' + fc2(SiLU(fc1(LN(x'))))
/// With the multi-scale windowed scan this is the LE-SSM block, with SS2D the
/// plain VSS block.
struct SsmBlock {
    BlockConfig cfg;
    LayerNorm norm1;
    Linear in_proj;
    Var dw_w;
    Var dw_b;
    ScanMixer mixer;
    LayerNorm out_norm;
    Linear out_proj;
    LayerNorm norm2;
    Linear fc1;
    Linear fc2;

    static SsmBlock create(const Scope& scope, const BlockConfig& cfg, Init& init);
    Var operator()(const Var& x) const;
};

/// Channel attention then 7x7 spatial attention.
struct Cbam {
    Linear fc1;
    Linear fc2;
    Conv2d spatial;

    static Cbam create(const Scope& scope, Index channels, Index reduction, Init& init);
    Var channel_gate(const Var& x) const;
    Var spatial_gate(const Var& x) const;
    Var operator()(const Var& x) const;
};

}  // namespace leaf
