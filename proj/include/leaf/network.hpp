#pragma once

#include "leaf/afm.hpp"
#include "leaf/blocks.hpp"

#include <array>
#include <cstdint>

namespace leaf {

struct ModelConfig {
    Index input_size = 64;
    std::array<Index, 4> channels{8, 16, 32, 64};
    std::array<Index, 4> blocks{1, 1, 1, 1};
    /// Scan strategy of the last encoder block in each stage. The
    /// multi-scale windowed scan gives LE-SSM; SS2D gives the plain block.
    MixerScan mixer{};
    bool afm = true;
    Index afm_paths = 1;
    CsopConfig csop{};
    Index state_dim = 8;
    Real mlp_ratio = 2;
    Index decoder_channels = 16;
    Index stem_stride = 4;
    Index cbam_reduction = 4;
    Interp upsample = Interp::Nearest;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Four side outputs at input resolution, finest first; p[0] is the final map.
struct Predictions {
    std::array<Var, 4> p;
    const Var& final_map() const { return p[0]; }
};

struct EncoderStream {
    Conv2d stem;
    LayerNorm stem_norm;
    std::array<LayerNorm, 4> merge_norm;
    std::array<Linear, 4> merge;
    std::array<std::vector<SsmBlock>, 4> blocks;
};

struct DecoderLevel {
    Linear lateral;
    SsmBlock block;
    Cbam cbam;
    Linear head;
};

class LeafModel {
public:
    explicit LeafModel(const ModelConfig& cfg);

    LeafModel(const LeafModel&) = delete;
    LeafModel& operator=(const LeafModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    /// Downsampling plus blocks of stage i (0-based) for both modalities.
    std::pair<Var, Var> encoder_stage(int stage, const Var& in_r, const Var& in_d) const;
    AfmOutput fuse_stage(int stage, const Var& f_r, const Var& f_d) const;

    /// rgb[3,H,W]; depth [1,H,W] (replicated to three channels) or [3,H,W].
    Predictions forward(const Tensor& rgb, const Tensor& depth) const;

private:
    ModelConfig cfg_;
    ParamStore store_;
    EncoderStream rgb_;
    EncoderStream depth_;
    std::vector<Afm> afm_;
    std::array<DecoderLevel, 4> decoder_;
};

/// Weighted BCE + weighted IoU with boundary weights 1 + 5|avgpool15(G) - G|.
Var ppa_loss(const Var& pred, const Tensor& gt);
/// Boundary emphasis weights used by ppa_loss.
Tensor ppa_weights(const Tensor& gt);
/// Uniform sum of ppa_loss over all side outputs.
Var deep_supervision_loss(const Predictions& preds, const Tensor& gt);

}  // namespace leaf
