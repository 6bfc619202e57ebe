#include "leaf/afm.hpp"

#include <cmath>

namespace leaf {

namespace {

Var center_channels(const Var& t) { return t - mean(t, {0}); }

void check_same(const Var& a, const Var& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": modality shapes differ " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

Var weighted_readout(const Var& weight, const Var& c) {
    if (weight.value().rank() != 2 || weight.dim(0) != 1 || weight.dim(1) != c.dim(1)) {
        throw ShapeError("scan weight map " + shape_str(weight.shape()) + " does not match sequence length " +
                         std::to_string(c.dim(1)));
    }
    return weight * c;
}

}  // namespace

Var cross_covariance(const Var& t_d, const Var& t_r) {
    check_same(t_d, t_r, "cross_covariance");
    const Index C = t_d.dim(0);
    if (C < 2) throw ShapeError("cross_covariance needs at least two channels");
    return matmul(transpose(center_channels(t_d)), center_channels(t_r)) * (Real(1) / static_cast<Real>(C - 1));
}

Var cosine_similarity_matrix(const Var& t_d, const Var& t_r) {
    check_same(t_d, t_r, "cosine_similarity_matrix");
    const Index L = t_d.dim(1);
    Var dot = sum(t_d * t_r, {0});
    Var norm = exp(mul_scalar(log(add_scalar(sum(square(t_d), {0}) * sum(square(t_r), {0}), Real(1e-16))), Real(0.5)));
    Tensor eye({L, L});
    for (Index i = 0; i < L; ++i) eye.at(i, i) = 1;
    return constant(std::move(eye)) * (dot / norm);
}

Csop Csop::create(const Scope& scope, Index feature_channels, const CsopConfig& cfg, Init& init) {
    if (cfg.height <= 0 || cfg.width <= 0 || cfg.channels < 2) throw ConfigError("invalid CSoP pooled size");
    const Index L = cfg.height * cfg.width;
    Csop c;
    c.cfg = cfg;
    c.proj = Linear::create(scope.child("proj"), feature_channels, cfg.channels, init);
    if (cfg.pooling == Pooling::Conv) {
        c.col_w = scope.add("col.w", init.fan_in({1, L}, L));
        c.col_b = scope.add("col.b", Tensor::zeros({1, 1}));
        c.row_w = scope.add("row.w", init.fan_in({L, 1}, L));
        c.row_b = scope.add("row.b", Tensor::zeros({1, 1}));
    }
    c.lin_r.w = scope.add("lin_r.w", init.normal({L, L}, Real(1e-2)));
    c.lin_r.b = scope.add("lin_r.b", Tensor::zeros({L}));
    c.lin_d.w = scope.add("lin_d.w", init.normal({L, L}, Real(1e-2)));
    c.lin_d.b = scope.add("lin_d.b", Tensor::zeros({L}));
    return c;
}

Var Csop::tokens(const Var& f) const {
    Var pooled = adaptive_avgpool2d(proj(f), cfg.height, cfg.width);
    return reshape(pooled, {cfg.channels, cfg.height * cfg.width});
}

Var Csop::similarity_matrix(const Var& f_r, const Var& f_d) const {
    check_same(f_r, f_d, "csop");
    Var t_r = tokens(f_r);
    Var t_d = tokens(f_d);
    return cfg.similarity == Similarity::Covariance ? cross_covariance(t_d, t_r) : cosine_similarity_matrix(t_d, t_r);
}

SimilarityMaps Csop::operator()(const Var& f_r, const Var& f_d) const {
    const Index L = cfg.height * cfg.width;
    Var m = similarity_matrix(f_r, f_d);
    // Rows of M index depth tokens, columns RGB tokens.
    Var v_r;
    Var v_d;
    switch (cfg.pooling) {
        case Pooling::Conv:
            v_r = reshape(matmul(col_w, m) + col_b, {L, 1});
            v_d = matmul(m, row_w) + row_b;
            break;
        case Pooling::Avg:
            v_r = reshape(mean(m, {0}), {L, 1});
            v_d = mean(m, {1});
            break;
        case Pooling::Max:
            v_r = reshape(max(m, {0}), {L, 1});
            v_d = max(m, {1});
            break;
    }
    auto to_map = [&](const Var& v, const Linear& lin) {
        Var s = reshape(sigmoid(lin(v)), {1, cfg.height, cfg.width});
        const Index H = f_r.dim(1);
        const Index W = f_r.dim(2);
        if (H == cfg.height && W == cfg.width) return s;
        if (H >= cfg.height && W >= cfg.width) return resize2d(s, H, W, Interp::Nearest);
        return adaptive_avgpool2d(s, H, W);
    };
    return {to_map(v_r, lin_r), to_map(v_d, lin_d), m};
}

std::pair<Var, Var> sim_scan(const Var& x_r, const Var& x_d, const Projections& pr, const Projections& pd,
                             const Var& dist_r, const Var& dist_d, const SsmParams& p_r, const SsmParams& p_d) {
    check_same(x_r, x_d, "sim_scan");
    Var y_r = selective_scan_recurrent(p_r, {x_r, pr.b, weighted_readout(dist_r, pd.c), pr.delta});
    Var y_d = selective_scan_recurrent(p_d, {x_d, pd.b, weighted_readout(dist_d, pr.c), pd.delta});
    return {y_r, y_d};
}

std::pair<Var, Var> sim_scan(const Var& x_r, const Var& x_d, const Var& dist_r, const Var& dist_d,
                             const SsmParams& p_r, const SsmParams& p_d) {
    return sim_scan(x_r, x_d, project(p_r, x_r), project(p_d, x_d), dist_r, dist_d, p_r, p_d);
}

std::pair<Var, Var> sem_scan(const Var& x_r, const Var& x_d, const Projections& pr, const Projections& pd,
                             const Var& sim_r, const Var& sim_d, const SsmParams& p_r, const SsmParams& p_d) {
    check_same(x_r, x_d, "sem_scan");
    Var y_r = selective_scan_recurrent(p_r, {x_r, pr.b, weighted_readout(sim_r, pr.c), pr.delta});
    Var y_d = selective_scan_recurrent(p_d, {x_d, pd.b, weighted_readout(sim_d, pd.c), pd.delta});
    return {y_r, y_d};
}

std::pair<Var, Var> sem_scan(const Var& x_r, const Var& x_d, const Var& sim_r, const Var& sim_d,
                             const SsmParams& p_r, const SsmParams& p_d) {
    return sem_scan(x_r, x_d, project(p_r, x_r), project(p_d, x_d), sim_r, sim_d, p_r, p_d);
}

PairBlock PairBlock::create(const Scope& scope, const BlockConfig& cfg, PairMode mode, Index paths, Init& init) {
    if (paths != 1 && paths != 4) throw ConfigError("AFM scan paths must be 1 or 4");
    const Index C = cfg.channels;
    const Index E = cfg.expand * C;
    const Index hidden = static_cast<Index>(static_cast<Real>(C) * cfg.expansion);
    auto make_stream = [&](const Scope& s) {
        Stream st;
        st.norm1 = LayerNorm::create(s.child("norm1"), C);
        st.in_proj = Linear::create(s.child("in_proj"), C, 2 * E, init);
        st.dw_w = s.add("dw.w", init.fan_in({E, 1, 3, 3}, 9));
        st.dw_b = s.add("dw.b", Tensor::zeros({E, 1, 1}));
        st.ssm = SsmParams::create(s.child("ssm"), E, cfg.state_dim, init);
        st.out_norm = LayerNorm::create(s.child("out_norm"), E);
        st.out_proj = Linear::create(s.child("out_proj"), E, C, init);
        st.norm2 = LayerNorm::create(s.child("norm2"), C);
        st.fc1 = Linear::create(s.child("fc1"), C, hidden, init);
        st.fc2 = Linear::create(s.child("fc2"), hidden, C, init);
        return st;
    };
    PairBlock b;
    b.r = make_stream(scope.child("rgb"));
    b.d = make_stream(scope.child("depth"));
    b.mode = mode;
    b.paths = paths;
    return b;
}

std::pair<Var, Var> PairBlock::operator()(const Var& x_r, const Var& x_d, const Var& map_r, const Var& map_d) const {
    check_same(x_r, x_d, "pair block");
    const Index H = x_r.dim(1);
    const Index W = x_r.dim(2);
    const Index E = r.dw_w.dim(0);
    auto pre = [E](const Stream& s, const Var& x, Var& z) {
        Var xz = s.in_proj(s.norm1(x));
        z = slice(xz, E, 2 * E);
        return silu(conv2d(slice(xz, 0, E), s.dw_w, {1, 1, E}) + s.dw_b);
    };
    Var z_r;
    Var z_d;
    Var u_r = pre(r, x_r, z_r);
    Var u_d = pre(d, x_d, z_d);

    std::vector<ScanPermutation> perms;
    if (paths == 1) {
        perms.push_back(build_scan({Direction::Horizontal, false, 1}, H, W));
    } else {
        perms = mixer_permutations(MixerScan{}, H, W);
    }
    Var y_r;
    Var y_d;
    for (const auto& p : perms) {
        Var s_r = gather(u_r, p);
        Var s_d = gather(u_d, p);
        Var m_r = gather(map_r, p);
        Var m_d = gather(map_d, p);
        auto [a, b] = mode == PairMode::Interaction ? sim_scan(s_r, s_d, m_r, m_d, r.ssm, d.ssm)
                                                    : sem_scan(s_r, s_d, m_r, m_d, r.ssm, d.ssm);
        Var ya = scatter(a, p, H, W);
        Var yb = scatter(b, p, H, W);
        y_r = y_r ? y_r + ya : ya;
        y_d = y_d ? y_d + yb : yb;
    }
    auto post = [](const Stream& s, const Var& x, const Var& y, const Var& z) {
        Var x1 = x + s.out_proj(s.out_norm(y) * silu(z));
        return x1 + s.fc2(silu(s.fc1(s.norm2(x1))));
    };
    return {post(r, x_r, y_r, z_r), post(d, x_d, y_d, z_d)};
}

Afm Afm::create(const Scope& scope, Index channels, const AfmConfig& cfg, Init& init) {
    BlockConfig bc;
    bc.channels = channels;
    bc.state_dim = cfg.state_dim;
    bc.expansion = cfg.expansion;
    Afm a;
    a.csop_interact = Csop::create(scope.child("csop_interact"), channels, cfg.csop, init);
    a.interact = PairBlock::create(scope.child("sim"), bc, PairMode::Interaction, cfg.paths, init);
    a.csop_fuse = Csop::create(scope.child("csop_fuse"), channels, cfg.csop, init);
    a.fuse = PairBlock::create(scope.child("sem"), bc, PairMode::Enhancement, cfg.paths, init);
    a.fuse_proj = Linear::create(scope.child("fuse_proj"), channels, channels, init);
    return a;
}

AfmOutput Afm::operator()(const Var& f_r, const Var& f_d) const {
    check_same(f_r, f_d, "afm");
    AfmOutput out;
    out.interaction = csop_interact(f_r, f_d);
    std::tie(out.f_r, out.f_d) = interact(f_r, f_d, out.interaction.distance_r(), out.interaction.distance_d());
    out.fusion = csop_fuse(out.f_r, out.f_d);
    auto [e_r, e_d] = fuse(out.f_r, out.f_d, out.fusion.s_r, out.fusion.s_d);
    out.fused = fuse_proj(e_r + e_d);
    return out;
}

AfmOutput afm_bypass(const Var& f_r, const Var& f_d) {
    check_same(f_r, f_d, "afm bypass");
    AfmOutput out;
    out.f_r = f_r;
    out.f_d = f_d;
    out.fused = f_r + f_d;
    return out;
}

}  // namespace leaf
