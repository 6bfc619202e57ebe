#include "leaf/params.hpp"

#include <cmath>

namespace leaf {

Var ParamStore::add(std::string name, Tensor init) {
    if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
    Var v(std::move(init), true);
    params_.push_back({std::move(name), v});
    return v;
}

const Param* ParamStore::find(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

Index ParamStore::scalar_count() const {
    Index n = 0;
    for (const auto& p : params_) n += p.var.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
}

Tensor Init::normal(Shape shape, Real stddev) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (Real& v : t.data()) v = static_cast<Real>(dist(rng_));
    return t;
}

Tensor Init::uniform(Shape shape, Real lo, Real hi) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (Real& v : t.data()) v = static_cast<Real>(dist(rng_));
    return t;
}

Tensor Init::fan_in(Shape shape, Index fan_in) {
    const Real bound = Real(1) / std::sqrt(static_cast<Real>(std::max<Index>(fan_in, 1)));
    return uniform(std::move(shape), -bound, bound);
}

void adam_step(std::vector<Param>& params, AdamState& state, const AdamOptions& opt) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.var.shape());
            state.v.emplace_back(p.var.shape());
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam state does not match parameter count");
    ++state.step;
    const Real t = static_cast<Real>(state.step);
    const Real c1 = Real(1) - std::pow(opt.beta1, t);
    const Real c2 = Real(1) - std::pow(opt.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Var& var = params[i].var;
        if (state.m[i].shape() != var.shape()) throw ShapeError("adam state shape mismatch for " + params[i].name);
        if (!var.has_grad()) continue;
        const Tensor& g = var.node()->grad;
        Tensor& w = var.mutable_value();
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (Index k = 0; k < w.size(); ++k) {
            m[k] = opt.beta1 * m[k] + (Real(1) - opt.beta1) * g[k];
            v[k] = opt.beta2 * v[k] + (Real(1) - opt.beta2) * g[k] * g[k];
            const Real mhat = m[k] / c1;
            const Real vhat = v[k] / c2;
            w[k] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
    }
}

}  // namespace leaf
