#include "leaf/ssm.hpp"

#include <cmath>

namespace leaf {

SsmParams SsmParams::create(const Scope& scope, Index channels, Index state_dim, Init& init) {
    Tensor a_log({channels, state_dim});
    for (Index c = 0; c < channels; ++c)
        for (Index n = 0; n < state_dim; ++n) a_log.at(c, n) = std::log(static_cast<Real>(n + 1));
    Tensor dt = init.uniform({channels}, Real(1e-3), Real(1e-1));
    Tensor b_dt({channels});
    for (Index c = 0; c < channels; ++c) b_dt[c] = dt[c] + std::log(-std::expm1(-dt[c]));
    SsmParams p;
    p.a_log = scope.add("a_log", std::move(a_log));
    p.d = scope.add("d", Tensor::ones({channels}));
    p.w_b = scope.add("w_b", init.fan_in({state_dim, channels}, channels));
    p.w_c = scope.add("w_c", init.fan_in({state_dim, channels}, channels));
    p.w_dt = scope.add("w_dt", init.fan_in({channels, channels}, channels));
    p.b_dt = scope.add("b_dt", std::move(b_dt));
    return p;
}

Discretized discretize(const Tensor& a, const Tensor& b, const Tensor& delta) {
    if (a.rank() != 2 || b.rank() != 2 || delta.rank() != 2) throw ShapeError("discretize expects rank-2 A, B, delta");
    const Index ch = a.dim(0);
    const Index N = a.dim(1);
    const Index L = b.dim(1);
    if (b.dim(0) != N || delta.dim(0) != ch || delta.dim(1) != L) {
        throw ShapeError("discretize: A " + shape_str(a.shape()) + ", B " + shape_str(b.shape()) + ", delta " +
                         shape_str(delta.shape()) + " are inconsistent");
    }
    for (Real v : delta.data()) {
        if (!(v > 0)) throw ContractError("discretize: timescale delta must be strictly positive");
    }
    Discretized out{Tensor({ch, N, L}), Tensor({ch, N, L})};
    for (Index c = 0; c < ch; ++c)
        for (Index n = 0; n < N; ++n)
            for (Index t = 0; t < L; ++t) {
                const Real dt = delta.at(c, t);
                out.a_bar.at(c, n, t) = std::exp(dt * a.at(c, n));
                out.b_bar.at(c, n, t) = dt * b.at(n, t);
            }
    return out;
}

Var realized_a(const SsmParams& p) { return neg(exp(p.a_log)); }

Var selective_scan(const Var& a, const Var& d, const ScanInputs& in) {
    const Index ch = in.x.dim(0);
    const Index L = in.x.dim(1);
    const Index N = a.value().rank() == 2 ? a.dim(1) : 0;
    if (in.x.value().rank() != 2 || a.value().rank() != 2 || a.dim(0) != ch || d.size() != ch ||
        in.b.shape() != Shape{N, L} || in.c.shape() != Shape{N, L} || in.delta.shape() != Shape{ch, L}) {
        throw ShapeError("selective_scan: x " + shape_str(in.x.shape()) + ", A " + shape_str(a.shape()) + ", D " +
                         shape_str(d.shape()) + ", B " + shape_str(in.b.shape()) + ", C " + shape_str(in.c.shape()) +
                         ", delta " + shape_str(in.delta.shape()) + " are inconsistent");
    }
    const Real* px = in.x.value().raw();
    const Real* pa = a.value().raw();
    const Real* pd = d.value().raw();
    const Real* pb = in.b.value().raw();
    const Real* pc = in.c.value().raw();
    const Real* pdt = in.delta.value().raw();
    for (Index i = 0; i < ch * L; ++i) {
        if (std::isnan(pdt[i])) throw NumericError("selective_scan: timescale delta is NaN");
        if (!(pdt[i] > 0)) throw ContractError("selective_scan: timescale delta must be strictly positive");
    }

    Tensor y({ch, L});
    // States are kept for the reverse sweep, laid out [ch, N, L].
    Tensor states({ch, N, L});
    for (Index c = 0; c < ch; ++c)
        for (Index n = 0; n < N; ++n) {
            const Real an = pa[c * N + n];
            Real h = 0;
            Real* hs = states.raw() + (c * N + n) * L;
            for (Index t = 0; t < L; ++t) {
                const Real dt = pdt[c * L + t];
                h = std::exp(dt * an) * h + dt * pb[n * L + t] * px[c * L + t];
                hs[t] = h;
                y[c * L + t] += pc[n * L + t] * h;
            }
        }
    for (Index c = 0; c < ch; ++c)
        for (Index t = 0; t < L; ++t) y[c * L + t] += pd[c] * px[c * L + t];

    // Parent order: x, b, c, delta, a, d.
    return make_result(std::move(y), {in.x, in.b, in.c, in.delta, a, d},
                       [ch, L, N, states = std::move(states)](Node& self) {
                           const Real* gy = self.grad.raw();
                           const Real* px = self.parents[0]->value.raw();
                           const Real* pb = self.parents[1]->value.raw();
                           const Real* pc = self.parents[2]->value.raw();
                           const Real* pdt = self.parents[3]->value.raw();
                           const Real* pa = self.parents[4]->value.raw();
                           const Real* pd = self.parents[5]->value.raw();
                           Tensor gx({ch, L});
                           Tensor gb({N, L});
                           Tensor gc({N, L});
                           Tensor gdt({ch, L});
                           Tensor ga({ch, N});
                           Tensor gd({ch});
                           for (Index c = 0; c < ch; ++c)
                               for (Index n = 0; n < N; ++n) {
                                   const Real an = pa[c * N + n];
                                   const Real* hs = states.raw() + (c * N + n) * L;
                                   Real gh = 0;
                                   Real ga_acc = 0;
                                   for (Index t = L; t-- > 0;) {
                                       const Real g = gy[c * L + t];
                                       gh += g * pc[n * L + t];
                                       gc[n * L + t] += g * hs[t];
                                       const Real dt = pdt[c * L + t];
                                       const Real abar = std::exp(dt * an);
                                       const Real h_prev = t > 0 ? hs[t - 1] : Real(0);
                                       const Real da = gh * h_prev * abar;
                                       const Real xb = pb[n * L + t] * px[c * L + t];
                                       gdt[c * L + t] += da * an + gh * xb;
                                       ga_acc += da * dt;
                                       gb[n * L + t] += gh * dt * px[c * L + t];
                                       gx[c * L + t] += gh * dt * pb[n * L + t];
                                       gh *= abar;
                                   }
                                   ga[c * N + n] = ga_acc;
                               }
                           for (Index c = 0; c < ch; ++c)
                               for (Index t = 0; t < L; ++t) {
                                   gx[c * L + t] += gy[c * L + t] * pd[c];
                                   gd[c] += gy[c * L + t] * px[c * L + t];
                               }
                           self.parents[0]->accumulate(gx);
                           self.parents[1]->accumulate(gb);
                           self.parents[2]->accumulate(gc);
                           self.parents[3]->accumulate(gdt);
                           self.parents[4]->accumulate(ga);
                           self.parents[5]->accumulate(gd);
                       });
}

Var selective_scan_recurrent(const SsmParams& p, const ScanInputs& in) { return selective_scan(realized_a(p), p.d, in); }

Tensor selective_scan_conv(const Tensor& a, const Tensor& d, const Tensor& x, const Tensor& b, const Tensor& c,
                           const Tensor& delta) {
    const Index ch = x.dim(0);
    const Index L = x.dim(1);
    const Index N = a.dim(1);
    if (b.shape() != Shape{N, L} || c.shape() != Shape{N, L} || delta.shape() != Shape{ch, L} || a.dim(0) != ch ||
        d.size() != ch) {
        throw ShapeError("selective_scan_conv: inconsistent shapes");
    }
    for (Index t = 1; t < L; ++t) {
        for (Index n = 0; n < N; ++n) {
            if (b.at(n, t) != b.at(n, 0) || c.at(n, t) != c.at(n, 0)) {
                throw ContractError("selective_scan_conv requires time-invariant B and C");
            }
        }
        for (Index k = 0; k < ch; ++k) {
            if (delta.at(k, t) != delta.at(k, 0)) throw ContractError("selective_scan_conv requires time-invariant delta");
        }
    }
    Tensor y({ch, L});
    for (Index k = 0; k < ch; ++k) {
        const Real dt = delta.at(k, 0);
        if (!(dt > 0)) throw ContractError("selective_scan_conv: delta must be strictly positive");
        std::vector<Real> kernel(static_cast<std::size_t>(L), Real(0));
        for (Index n = 0; n < N; ++n) {
            const Real abar = std::exp(dt * a.at(k, n));
            Real power = 1;
            for (Index j = 0; j < L; ++j) {
                kernel[j] += c.at(n, 0) * power * dt * b.at(n, 0);
                power *= abar;
            }
        }
        for (Index t = 0; t < L; ++t) {
            Real acc = 0;
            for (Index j = 0; j <= t; ++j) acc += kernel[j] * x.at(k, t - j);
            y.at(k, t) = acc + d[k] * x.at(k, t);
        }
    }
    return y;
}

Projections project(const SsmParams& p, const Var& x_seq) {
    return {linear_channels(x_seq, p.w_b), linear_channels(x_seq, p.w_c),
            softplus(linear_channels(x_seq, p.w_dt, &p.b_dt))};
}

Var s6_branch(const Var& x_seq, const SsmParams& p) {
    Projections pr = project(p, x_seq);
    return selective_scan_recurrent(p, {x_seq, pr.b, pr.c, pr.delta});
}

}  // namespace leaf
