#pragma once

#include "leaf/blocks.hpp"

#include <utility>

namespace leaf {

enum class Similarity { Covariance, Cosine };
enum class Pooling { Conv, Avg, Max };

struct CsopConfig {
    Index height = 8;
    Index width = 8;
    Index channels = 96;
    Similarity similarity = Similarity::Covariance;
    Pooling pooling = Pooling::Conv;
};

/// Per-modality spatial maps at feature resolution, each [1,H,W] in (0,1).
struct SimilarityMaps {
    Var s_r;
    Var s_d;
    Var m;  // the [HW, HW] similarity matrix before pooling

    Var distance_r() const { return add_scalar(neg(s_r), Real(1)); }
    Var distance_d() const { return add_scalar(neg(s_d), Real(1)); }
};

/// M[i,j] = <t_d_i - mean, t_r_j - mean> / (C-1) for channel-first tokens [C,L].
Var cross_covariance(const Var& t_d, const Var& t_r);

/// diag(cos(t_d_i, t_r_i)) as an [L,L] matrix.
Var cosine_similarity_matrix(const Var& t_d, const Var& t_r);

struct Csop {
    CsopConfig cfg;
    Linear proj;  // shared 1x1 conv to cfg.channels
    Var col_w;    // [1, L] collapses each column of M
    Var col_b;
    Var row_w;    // [L, 1] collapses each row of M
    Var row_b;
    Linear lin_r;
    Linear lin_d;

    static Csop create(const Scope& scope, Index feature_channels, const CsopConfig& cfg, Init& init);

    /// Flattened pooled tokens [cfg.channels, H*W] of one modality.
    Var tokens(const Var& f) const;
    Var similarity_matrix(const Var& f_r, const Var& f_d) const;
    SimilarityMaps operator()(const Var& f_r, const Var& f_d) const;
};

/// Cross-modality interaction: each stream's readout uses the other stream's
/// C weighted by its own distance map, Y_r = (D_r C_d) h_r + D x_r.
std::pair<Var, Var> sim_scan(const Var& x_r, const Var& x_d, const Projections& pr, const Projections& pd,
                             const Var& dist_r, const Var& dist_d, const SsmParams& p_r, const SsmParams& p_d);
std::pair<Var, Var> sim_scan(const Var& x_r, const Var& x_d, const Var& dist_r, const Var& dist_d,
                             const SsmParams& p_r, const SsmParams& p_d);

/// Similarity-weighted enhancement, Y_r = (S_r C_r) h_r + D x_r, no swap.
std::pair<Var, Var> sem_scan(const Var& x_r, const Var& x_d, const Projections& pr, const Projections& pd,
                             const Var& sim_r, const Var& sim_d, const SsmParams& p_r, const SsmParams& p_d);
std::pair<Var, Var> sem_scan(const Var& x_r, const Var& x_d, const Var& sim_r, const Var& sim_d,
                             const SsmParams& p_r, const SsmParams& p_d);

enum class PairMode { Interaction, Enhancement };

/// Two-stream block whose token mixer is the paired SIM or SEM scan.
struct PairBlock {
    struct Stream {
        LayerNorm norm1;
        Linear in_proj;
        Var dw_w;
        Var dw_b;
        SsmParams ssm;
        LayerNorm out_norm;
        Linear out_proj;
        LayerNorm norm2;
        Linear fc1;
        Linear fc2;
    };
    Stream r;
    Stream d;
    PairMode mode = PairMode::Interaction;
    Index paths = 1;

    static PairBlock create(const Scope& scope, const BlockConfig& cfg, PairMode mode, Index paths, Init& init);
    /// maps are the [1,H,W] weights applied to C (distance or similarity).
    std::pair<Var, Var> operator()(const Var& x_r, const Var& x_d, const Var& map_r, const Var& map_d) const;
};

struct AfmConfig {
    CsopConfig csop{};
    Index paths = 1;
    Index state_dim = 8;
    Real expansion = 2;
};

struct AfmOutput {
    Var f_r;
    Var f_d;
    Var fused;
    SimilarityMaps interaction;
    SimilarityMaps fusion;
};

struct Afm {
    Csop csop_interact;
    PairBlock interact;
    Csop csop_fuse;
    PairBlock fuse;
    Linear fuse_proj;

    static Afm create(const Scope& scope, Index channels, const AfmConfig& cfg, Init& init);
    AfmOutput operator()(const Var& f_r, const Var& f_d) const;
};

/// Disabled-AFM topology: features pass through and fuse by addition.
AfmOutput afm_bypass(const Var& f_r, const Var& f_d);

}  // namespace leaf
