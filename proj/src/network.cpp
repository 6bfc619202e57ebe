#include "leaf/network.hpp"

namespace leaf {

void ModelConfig::validate() const {
    if (stem_stride <= 0) throw ConfigError("stem_stride must be positive");
    const Index total = stem_stride * 8;
    if (input_size <= 0 || input_size % total != 0) {
        throw ConfigError("input_size " + std::to_string(input_size) + " must be divisible by " +
                          std::to_string(total) + " (stem stride x 8)");
    }
    for (int i = 0; i < 4; ++i) {
        if (channels[i] <= 0) throw ConfigError("stage channels must be positive");
        if (blocks[i] <= 0) throw ConfigError("each stage needs at least one block");
    }
    if (decoder_channels < cbam_reduction) {
        throw ConfigError("decoder_channels must be at least the CBAM reduction ratio");
    }
    if (afm_paths != 1 && afm_paths != 4) throw ConfigError("afm_paths must be 1 or 4");
    if (state_dim <= 0) throw ConfigError("state_dim must be positive");
    if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
}

LeafModel::LeafModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Init init(cfg_.seed);
    Scope root(store_, "");

    auto block_cfg = [&](Index ch, MixerScan scan) {
        BlockConfig b;
        b.channels = ch;
        b.mixer = scan;
        b.expansion = cfg_.mlp_ratio;
        b.state_dim = cfg_.state_dim;
        return b;
    };
    MixerScan plain{ScanKind::SS2D};

    auto make_stream = [&](const std::string& name) {
        Scope s = root.child(name);
        EncoderStream st;
        st.stem = Conv2d::create(s.child("stem"), 3, cfg_.channels[0], cfg_.stem_stride,
                                 {cfg_.stem_stride, 0, 1}, init);
        st.stem_norm = LayerNorm::create(s.child("stem_norm"), cfg_.channels[0]);
        for (int i = 0; i < 4; ++i) {
            Scope stage = s.child("stage" + std::to_string(i));
            if (i > 0) {
                const Index in = 4 * cfg_.channels[i - 1];
                st.merge_norm[i] = LayerNorm::create(stage.child("merge_norm"), in);
                st.merge[i] = Linear::create(stage.child("merge"), in, cfg_.channels[i], init);
            }
            for (Index b = 0; b < cfg_.blocks[i]; ++b) {
                const bool last = b + 1 == cfg_.blocks[i];
                st.blocks[i].push_back(SsmBlock::create(stage.child("block" + std::to_string(b)),
                                                        block_cfg(cfg_.channels[i], last ? cfg_.mixer : plain), init));
            }
        }
        return st;
    };
    rgb_ = make_stream("rgb");
    depth_ = make_stream("depth");

    if (cfg_.afm) {
        AfmConfig ac;
        ac.csop = cfg_.csop;
        ac.paths = cfg_.afm_paths;
        ac.state_dim = cfg_.state_dim;
        ac.expansion = cfg_.mlp_ratio;
        for (int i = 0; i < 4; ++i) {
            afm_.push_back(Afm::create(root.child("afm" + std::to_string(i)), cfg_.channels[i], ac, init));
        }
    }

    const Index dc = cfg_.decoder_channels;
    for (int i = 3; i >= 0; --i) {
        Scope s = root.child("decoder" + std::to_string(i));
        DecoderLevel& lvl = decoder_[i];
        lvl.lateral = Linear::create(s.child("lateral"), cfg_.channels[i], dc, init);
        lvl.block = SsmBlock::create(s.child("block"), block_cfg(dc, plain), init);
        lvl.cbam = Cbam::create(s.child("cbam"), dc, cfg_.cbam_reduction, init);
        lvl.head = Linear::create(s.child("head"), dc, 1, init);
    }
}

std::pair<Var, Var> LeafModel::encoder_stage(int stage, const Var& in_r, const Var& in_d) const {
    if (stage < 0 || stage > 3) throw ContractError("encoder stage index must be 0..3");
    auto run = [&](const EncoderStream& st, const Var& x) {
        Var h = stage == 0 ? st.stem_norm(st.stem(x)) : st.merge[stage](st.merge_norm[stage](space_to_channel(x, 2)));
        for (const auto& b : st.blocks[stage]) h = b(h);
        return h;
    };
    return {run(rgb_, in_r), run(depth_, in_d)};
}

AfmOutput LeafModel::fuse_stage(int stage, const Var& f_r, const Var& f_d) const {
    if (!cfg_.afm) return afm_bypass(f_r, f_d);
    return afm_[static_cast<std::size_t>(stage)](f_r, f_d);
}

Predictions LeafModel::forward(const Tensor& rgb, const Tensor& depth) const {
    const Index S = cfg_.input_size;
    if (rgb.shape() != Shape{3, S, S}) {
        throw ShapeError("rgb input must be [3," + std::to_string(S) + "," + std::to_string(S) + "], got " +
                         shape_str(rgb.shape()));
    }
    Var x_r = constant(rgb);
    Var x_d;
    if (depth.shape() == Shape{1, S, S}) {
        Var d = constant(depth);
        x_d = concat({d, d, d});
    } else if (depth.shape() == Shape{3, S, S}) {
        x_d = constant(depth);
    } else {
        throw ShapeError("depth input must be [1,S,S] or [3,S,S], got " + shape_str(depth.shape()));
    }

    std::array<Var, 4> fused;
    for (int i = 0; i < 4; ++i) {
        auto [f_r, f_d] = encoder_stage(i, x_r, x_d);
        AfmOutput a = fuse_stage(i, f_r, f_d);
        fused[i] = a.fused;
        x_r = a.f_r;
        x_d = a.f_d;
    }

    Predictions out;
    Var d;
    for (int i = 3; i >= 0; --i) {
        const DecoderLevel& lvl = decoder_[i];
        Var lat = lvl.lateral(fused[i]);
        Var x = d ? upsample2d(d, 2, cfg_.upsample) + lat : lat;
        d = lvl.cbam(lvl.block(x));
        out.p[i] = sigmoid(resize2d(lvl.head(d), S, S, cfg_.upsample));
    }
    return out;
}

}  // namespace leaf
