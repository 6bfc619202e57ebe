#include "leaf/ops.hpp"

#include <cmath>
#include <limits>

namespace leaf {

namespace {

template <class F>
Tensor map_unary(const Tensor& a, F f) {
    Tensor out(a.shape());
    const Real* src = a.raw();
    Real* dst = out.raw();
    for (Index i = 0; i < a.size(); ++i) dst[i] = f(src[i]);
    return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
    if (a.shape() == b.shape()) {
        Tensor out(a.shape());
        for (Index i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
        return out;
    }
    const Shape shape = broadcast_shape(a.shape(), b.shape());
    Tensor out(shape);
    const auto sa = aligned_strides(a.shape(), shape);
    const auto sb = aligned_strides(b.shape(), shape);
    const std::size_t rank = shape.size();
    const Index inner = shape.back();
    const Index ia = sa.back();
    const Index ib = sb.back();
    const Index outer = out.size() / inner;
    std::vector<Index> idx(rank, 0);
    const Real* pa = a.raw();
    const Real* pb = b.raw();
    Real* po = out.raw();
    for (Index o = 0; o < outer; ++o) {
        Index oa = 0;
        Index ob = 0;
        for (std::size_t d = 0; d + 1 < rank; ++d) {
            oa += idx[d] * sa[d];
            ob += idx[d] * sb[d];
        }
        for (Index i = 0; i < inner; ++i) po[o * inner + i] = f(pa[oa + i * ia], pb[ob + i * ib]);
        for (std::size_t d = rank - 1; d-- > 0;) {
            if (++idx[d] < shape[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

Real stable_sigmoid(Real v) {
    if (v >= 0) {
        const Real z = std::exp(-v);
        return Real(1) / (Real(1) + z);
    }
    const Real z = std::exp(v);
    return z / (Real(1) + z);
}

Real stable_softplus(Real v) {
    if (v > Real(20)) return v + std::log1p(std::exp(-v));
    return std::log1p(std::exp(v));
}

template <class Fwd, class Deriv>
Var unary_op(const Var& a, Fwd fwd, Deriv deriv) {
    Tensor value = map_unary(a.value(), fwd);
    return make_result(std::move(value), {a}, [deriv](Node& self) {
        const Tensor& x = self.parents[0]->value;
        Tensor g(x.shape());
        for (Index i = 0; i < g.size(); ++i) g[i] = self.grad[i] * deriv(x[i], self.value[i]);
        self.parents[0]->accumulate(g);
    });
}

void check_rank(const Var& x, Index rank, const char* op) {
    if (x.value().rank() != rank) {
        throw ShapeError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
    }
}

Index pooled_extent(Index in, Index kernel, Index stride, Index padding, const char* op) {
    if (kernel <= 0 || stride <= 0 || padding < 0) throw ShapeError(std::string(op) + ": invalid kernel/stride/padding");
    const Index span = in + 2 * padding - kernel;
    if (span < 0 || span % stride != 0) {
        throw ShapeError(std::string(op) + ": output extent (" + std::to_string(in) + "+2*" + std::to_string(padding) +
                         "-" + std::to_string(kernel) + ")/" + std::to_string(stride) + "+1 is not integral");
    }
    return span / stride + 1;
}

// One output index of a separable resampler: a short list of weighted taps.
using Taps = std::vector<std::vector<std::pair<Index, Real>>>;

Var separable_resample(const Var& x, Taps rows, Taps cols) {
    check_rank(x, 3, "resample");
    const Index C = x.dim(0);
    const Index H = x.dim(1);
    const Index W = x.dim(2);
    const Index Ho = static_cast<Index>(rows.size());
    const Index Wo = static_cast<Index>(cols.size());
    const Tensor& in = x.value();
    Tensor mid({C, H, Wo});
    for (Index c = 0; c < C; ++c)
        for (Index h = 0; h < H; ++h)
            for (Index j = 0; j < Wo; ++j) {
                Real acc = 0;
                for (auto [q, w] : cols[j]) acc += w * in[(c * H + h) * W + q];
                mid[(c * H + h) * Wo + j] = acc;
            }
    Tensor out({C, Ho, Wo});
    for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < Ho; ++i)
            for (auto [p, w] : rows[i])
                for (Index j = 0; j < Wo; ++j) out[(c * Ho + i) * Wo + j] += w * mid[(c * H + p) * Wo + j];

    return make_result(std::move(out), {x}, [rows = std::move(rows), cols = std::move(cols), C, H, W, Ho, Wo](Node& self) {
        Tensor gmid({C, H, Wo});
        for (Index c = 0; c < C; ++c)
            for (Index i = 0; i < Ho; ++i)
                for (auto [p, w] : rows[i])
                    for (Index j = 0; j < Wo; ++j) gmid[(c * H + p) * Wo + j] += w * self.grad[(c * Ho + i) * Wo + j];
        Tensor gx({C, H, W});
        for (Index c = 0; c < C; ++c)
            for (Index h = 0; h < H; ++h)
                for (Index j = 0; j < Wo; ++j) {
                    const Real g = gmid[(c * H + h) * Wo + j];
                    for (auto [q, w] : cols[j]) gx[(c * H + h) * W + q] += w * g;
                }
        self.parents[0]->accumulate(gx);
    });
}

Taps pool_taps(Index in, Index out, Index kernel, Index stride, Index padding) {
    Taps taps(static_cast<std::size_t>(out));
    const Real w = Real(1) / static_cast<Real>(kernel);
    for (Index i = 0; i < out; ++i)
        for (Index t = 0; t < kernel; ++t) {
            const Index src = i * stride - padding + t;
            if (src >= 0 && src < in) taps[i].emplace_back(src, w);
        }
    return taps;
}

Taps adaptive_taps(Index in, Index out) {
    Taps taps(static_cast<std::size_t>(out));
    for (Index i = 0; i < out; ++i) {
        const Index begin = (i * in) / out;
        const Index end = ((i + 1) * in + out - 1) / out;
        const Real w = Real(1) / static_cast<Real>(end - begin);
        for (Index s = begin; s < end; ++s) taps[i].emplace_back(s, w);
    }
    return taps;
}

Taps interp_taps(Index in, Index out, Interp mode) {
    Taps taps(static_cast<std::size_t>(out));
    for (Index i = 0; i < out; ++i) {
        if (mode == Interp::Nearest) {
            taps[i].emplace_back(std::min((i * in) / out, in - 1), Real(1));
            continue;
        }
        Real src = (static_cast<Real>(i) + Real(0.5)) * static_cast<Real>(in) / static_cast<Real>(out) - Real(0.5);
        if (src < 0) src = 0;
        const Index i0 = std::min(static_cast<Index>(std::floor(src)), in - 1);
        const Index i1 = std::min(i0 + 1, in - 1);
        const Real lambda = src - static_cast<Real>(i0);
        if (i1 == i0 || lambda == 0) {
            taps[i].emplace_back(i0, Real(1));
        } else {
            taps[i].emplace_back(i0, Real(1) - lambda);
            taps[i].emplace_back(i1, lambda);
        }
    }
    return taps;
}

std::vector<bool> axis_mask(const Tensor& x, std::span<const Index> axes) {
    std::vector<bool> mask(static_cast<std::size_t>(x.rank()), false);
    for (Index a : axes) {
        const Index ax = a < 0 ? a + x.rank() : a;
        if (ax < 0 || ax >= x.rank()) {
            throw ShapeError("reduction axis " + std::to_string(a) + " invalid for shape " + shape_str(x.shape()));
        }
        mask[static_cast<std::size_t>(ax)] = true;
    }
    return mask;
}

Shape reduced_shape(const Tensor& x, const std::vector<bool>& mask) {
    Shape s = x.shape();
    for (std::size_t i = 0; i < s.size(); ++i)
        if (mask[i]) s[i] = 1;
    return s;
}

// im2col for one channel group: rows are (c, ky, kx), columns output positions.
RowMatrix<Real> im2col(const Real* x, Index C, Index H, Index W, Index kh, Index kw, Index stride, Index pad,
                       Index Ho, Index Wo) {
    RowMatrix<Real> cols = RowMatrix<Real>::Zero(C * kh * kw, Ho * Wo);
    for (Index c = 0; c < C; ++c)
        for (Index ky = 0; ky < kh; ++ky)
            for (Index kx = 0; kx < kw; ++kx) {
                const Index row = (c * kh + ky) * kw + kx;
                for (Index oy = 0; oy < Ho; ++oy) {
                    const Index iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (Index ox = 0; ox < Wo; ++ox) {
                        const Index ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= W) continue;
                        cols(row, oy * Wo + ox) = x[(c * H + iy) * W + ix];
                    }
                }
            }
    return cols;
}

void col2im(const RowMatrix<Real>& cols, Real* gx, Index C, Index H, Index W, Index kh, Index kw, Index stride,
            Index pad, Index Ho, Index Wo) {
    for (Index c = 0; c < C; ++c)
        for (Index ky = 0; ky < kh; ++ky)
            for (Index kx = 0; kx < kw; ++kx) {
                const Index row = (c * kh + ky) * kw + kx;
                for (Index oy = 0; oy < Ho; ++oy) {
                    const Index iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (Index ox = 0; ox < Wo; ++ox) {
                        const Index ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= W) continue;
                        gx[(c * H + iy) * W + ix] += cols(row, oy * Wo + ox);
                    }
                }
            }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
    return make_result(map_binary(a.value(), b.value(), std::plus<>{}), {a, b}, [](Node& self) {
        for (auto& p : self.parents) p->accumulate(reduce_to_shape(self.grad, p->value.shape()));
    });
}

Var sub(const Var& a, const Var& b) {
    return make_result(map_binary(a.value(), b.value(), std::minus<>{}), {a, b}, [](Node& self) {
        self.parents[0]->accumulate(reduce_to_shape(self.grad, self.parents[0]->value.shape()));
        if (self.parents[1]->requires_grad) {
            self.parents[1]->accumulate(reduce_to_shape(map_unary(self.grad, std::negate<>{}), self.parents[1]->value.shape()));
        }
    });
}

Var mul(const Var& a, const Var& b) {
    return make_result(map_binary(a.value(), b.value(), std::multiplies<>{}), {a, b}, [](Node& self) {
        const Tensor& va = self.parents[0]->value;
        const Tensor& vb = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            self.parents[0]->accumulate(reduce_to_shape(map_binary(self.grad, vb, std::multiplies<>{}), va.shape()));
        }
        if (self.parents[1]->requires_grad) {
            self.parents[1]->accumulate(reduce_to_shape(map_binary(self.grad, va, std::multiplies<>{}), vb.shape()));
        }
    });
}

Var div(const Var& a, const Var& b) {
    return make_result(map_binary(a.value(), b.value(), std::divides<>{}), {a, b}, [](Node& self) {
        const Tensor& va = self.parents[0]->value;
        const Tensor& vb = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            self.parents[0]->accumulate(reduce_to_shape(map_binary(self.grad, vb, std::divides<>{}), va.shape()));
        }
        if (self.parents[1]->requires_grad) {
            Tensor q = map_binary(self.grad, vb, std::divides<>{});
            Tensor g = map_binary(q, self.value, [](Real x, Real y) { return -x * y; });
            self.parents[1]->accumulate(reduce_to_shape(g, vb.shape()));
        }
    });
}

Var add_scalar(const Var& a, Real s) {
    return make_result(map_unary(a.value(), [s](Real v) { return v + s; }), {a},
                       [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

Var mul_scalar(const Var& a, Real s) {
    return make_result(map_unary(a.value(), [s](Real v) { return v * s; }), {a}, [s](Node& self) {
        self.parents[0]->accumulate(map_unary(self.grad, [s](Real g) { return g * s; }));
    });
}

Var neg(const Var& a) {
    return unary_op(a, std::negate<>{}, [](Real, Real) { return Real(-1); });
}

Var exp(const Var& a) {
    return unary_op(a, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

Var log(const Var& a) {
    return unary_op(a, [](Real v) { return std::log(v); }, [](Real x, Real) { return Real(1) / x; });
}

Var sigmoid(const Var& a) {
    return unary_op(a, stable_sigmoid, [](Real, Real y) { return y * (Real(1) - y); });
}

Var silu(const Var& a) {
    return unary_op(
        a, [](Real v) { return v * stable_sigmoid(v); },
        [](Real x, Real) {
            const Real s = stable_sigmoid(x);
            return s * (Real(1) + x * (Real(1) - s));
        });
}

Var relu(const Var& a) {
    return unary_op(
        a, [](Real v) { return v > 0 ? v : Real(0); }, [](Real x, Real) { return x > 0 ? Real(1) : Real(0); });
}

Var softplus(const Var& a) {
    return unary_op(a, stable_softplus, [](Real x, Real) { return stable_sigmoid(x); });
}

Var square(const Var& a) {
    return unary_op(a, [](Real v) { return v * v; }, [](Real x, Real) { return Real(2) * x; });
}

Var clamp(const Var& a, Real lo, Real hi) {
    return unary_op(
        a, [lo, hi](Real v) { return std::clamp(v, lo, hi); },
        [lo, hi](Real x, Real) { return (x >= lo && x <= hi) ? Real(1) : Real(0); });
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(const Var& a, const Var& b) {
    check_rank(a, 2, "matmul");
    check_rank(b, 2, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    Tensor out({a.dim(0), b.dim(1)});
    out.matrix().noalias() = a.value().matrix() * b.value().matrix();
    return make_result(std::move(out), {a, b}, [](Node& self) {
        const Tensor& va = self.parents[0]->value;
        const Tensor& vb = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor ga(va.shape());
            ga.matrix().noalias() = self.grad.matrix() * vb.matrix().transpose();
            self.parents[0]->accumulate(ga);
        }
        if (self.parents[1]->requires_grad) {
            Tensor gb(vb.shape());
            gb.matrix().noalias() = va.matrix().transpose() * self.grad.matrix();
            self.parents[1]->accumulate(gb);
        }
    });
}

Var transpose(const Var& a) {
    check_rank(a, 2, "transpose");
    Tensor out({a.dim(1), a.dim(0)});
    out.matrix() = a.value().matrix().transpose();
    return make_result(std::move(out), {a}, [](Node& self) {
        Tensor g(self.parents[0]->value.shape());
        g.matrix() = self.grad.matrix().transpose();
        self.parents[0]->accumulate(g);
    });
}

Var linear_channels(const Var& x, const Var& w, const Var* bias) {
    check_rank(w, 2, "linear_channels weight");
    const Index in = x.dim(0);
    if (w.dim(1) != in) {
        throw ShapeError("linear_channels: weight " + shape_str(w.shape()) + " incompatible with input " +
                         shape_str(x.shape()));
    }
    const Index out_ch = w.dim(0);
    const Index positions = x.size() / in;
    Shape out_shape = x.shape();
    out_shape[0] = out_ch;
    Tensor out(out_shape);
    ConstRowMatrixMap<Real> X(x.value().raw(), in, positions);
    RowMatrixMap<Real> Y(out.raw(), out_ch, positions);
    Y.noalias() = w.value().matrix() * X;
    std::vector<Var> parents{x, w};
    if (bias) {
        if (bias->size() != out_ch) throw ShapeError("linear_channels: bias size mismatch");
        for (Index o = 0; o < out_ch; ++o) Y.row(o).array() += bias->value()[o];
        parents.push_back(*bias);
    }
    return make_result(std::move(out), std::move(parents), [in, out_ch, positions](Node& self) {
        ConstRowMatrixMap<Real> G(self.grad.raw(), out_ch, positions);
        const Tensor& vx = self.parents[0]->value;
        const Tensor& vw = self.parents[1]->value;
        ConstRowMatrixMap<Real> X(vx.raw(), in, positions);
        if (self.parents[0]->requires_grad) {
            Tensor gx(vx.shape());
            RowMatrixMap<Real>(gx.raw(), in, positions).noalias() = vw.matrix().transpose() * G;
            self.parents[0]->accumulate(gx);
        }
        if (self.parents[1]->requires_grad) {
            Tensor gw(vw.shape());
            gw.matrix().noalias() = G * X.transpose();
            self.parents[1]->accumulate(gw);
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            Tensor gb(self.parents[2]->value.shape());
            for (Index o = 0; o < out_ch; ++o) gb[o] = G.row(o).sum();
            self.parents[2]->accumulate(gb);
        }
    });
}

Var conv2d(const Var& x, const Var& w, Conv2dOptions opt) {
    check_rank(x, 3, "conv2d input");
    check_rank(w, 4, "conv2d weight");
    const Index Cin = x.dim(0);
    const Index H = x.dim(1);
    const Index W = x.dim(2);
    const Index Cout = w.dim(0);
    const Index kh = w.dim(2);
    const Index kw = w.dim(3);
    const Index G = opt.groups;
    if (G <= 0 || Cin % G != 0 || Cout % G != 0 || w.dim(1) != Cin / G) {
        throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()) +
                         " and groups=" + std::to_string(G));
    }
    const Index Ho = pooled_extent(H, kh, opt.stride, opt.padding, "conv2d");
    const Index Wo = pooled_extent(W, kw, opt.stride, opt.padding, "conv2d");
    const Index cin_g = Cin / G;
    const Index cout_g = Cout / G;
    const Index patch = cin_g * kh * kw;
    const Index stride = opt.stride;
    const Index pad = opt.padding;

    Tensor out({Cout, Ho, Wo});
    const Real* px = x.value().raw();
    const Real* pw = w.value().raw();
    const bool depthwise = cin_g == 1 && cout_g == 1;
    if (depthwise) {
        for (Index c = 0; c < Cout; ++c)
            for (Index oy = 0; oy < Ho; ++oy)
                for (Index ox = 0; ox < Wo; ++ox) {
                    Real acc = 0;
                    for (Index ky = 0; ky < kh; ++ky) {
                        const Index iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (Index kx = 0; kx < kw; ++kx) {
                            const Index ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= W) continue;
                            acc += pw[(c * kh + ky) * kw + kx] * px[(c * H + iy) * W + ix];
                        }
                    }
                    out[(c * Ho + oy) * Wo + ox] = acc;
                }
    } else {
        for (Index g = 0; g < G; ++g) {
            RowMatrix<Real> cols = im2col(px + g * cin_g * H * W, cin_g, H, W, kh, kw, stride, pad, Ho, Wo);
            ConstRowMatrixMap<Real> Wg(pw + g * cout_g * patch, cout_g, patch);
            RowMatrixMap<Real>(out.raw() + g * cout_g * Ho * Wo, cout_g, Ho * Wo).noalias() = Wg * cols;
        }
    }

    return make_result(std::move(out), {x, w}, [=](Node& self) {
        const Tensor& vx = self.parents[0]->value;
        const Tensor& vw = self.parents[1]->value;
        const bool need_x = self.parents[0]->requires_grad;
        const bool need_w = self.parents[1]->requires_grad;
        Tensor gx(vx.shape());
        Tensor gw(vw.shape());
        const Real* gout = self.grad.raw();
        if (depthwise) {
            for (Index c = 0; c < Cout; ++c)
                for (Index oy = 0; oy < Ho; ++oy)
                    for (Index ox = 0; ox < Wo; ++ox) {
                        const Real g = gout[(c * Ho + oy) * Wo + ox];
                        if (g == 0) continue;
                        for (Index ky = 0; ky < kh; ++ky) {
                            const Index iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (Index kx = 0; kx < kw; ++kx) {
                                const Index ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= W) continue;
                                gw[(c * kh + ky) * kw + kx] += g * vx[(c * H + iy) * W + ix];
                                gx[(c * H + iy) * W + ix] += g * vw[(c * kh + ky) * kw + kx];
                            }
                        }
                    }
        } else {
            for (Index g = 0; g < G; ++g) {
                ConstRowMatrixMap<Real> Gg(gout + g * cout_g * Ho * Wo, cout_g, Ho * Wo);
                if (need_w) {
                    RowMatrix<Real> cols = im2col(vx.raw() + g * cin_g * H * W, cin_g, H, W, kh, kw, stride, pad, Ho, Wo);
                    RowMatrixMap<Real>(gw.raw() + g * cout_g * patch, cout_g, patch).noalias() = Gg * cols.transpose();
                }
                if (need_x) {
                    ConstRowMatrixMap<Real> Wg(vw.raw() + g * cout_g * patch, cout_g, patch);
                    RowMatrix<Real> gcols = Wg.transpose() * Gg;
                    col2im(gcols, gx.raw() + g * cin_g * H * W, cin_g, H, W, kh, kw, stride, pad, Ho, Wo);
                }
            }
        }
        if (need_x) self.parents[0]->accumulate(gx);
        if (need_w) self.parents[1]->accumulate(gw);
    });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(const Var& x, std::span<const Index> axes) {
    const Shape out_shape = reduced_shape(x.value(), axis_mask(x.value(), axes));
    return make_result(reduce_to_shape(x.value(), out_shape), {x}, [](Node& self) {
        self.parents[0]->accumulate(broadcast_to(self.grad, self.parents[0]->value.shape()));
    });
}

Var mean(const Var& x, std::span<const Index> axes) {
    const Shape out_shape = reduced_shape(x.value(), axis_mask(x.value(), axes));
    const Real count = static_cast<Real>(x.size()) / static_cast<Real>(shape_numel(out_shape));
    Tensor out = reduce_to_shape(x.value(), out_shape);
    for (Real& v : out.data()) v /= count;
    return make_result(std::move(out), {x}, [count](Node& self) {
        Tensor g = broadcast_to(self.grad, self.parents[0]->value.shape());
        for (Real& v : g.data()) v /= count;
        self.parents[0]->accumulate(g);
    });
}

Var max(const Var& x, std::span<const Index> axes) {
    const Tensor& in = x.value();
    const Shape out_shape = reduced_shape(in, axis_mask(in, axes));
    Tensor out(out_shape, -std::numeric_limits<Real>::infinity());
    std::vector<Index> arg(static_cast<std::size_t>(out.size()), -1);
    const auto strides = aligned_strides(out_shape, in.shape());
    const Shape& full = in.shape();
    std::vector<Index> idx(full.size(), 0);
    for (Index flat = 0; flat < in.size(); ++flat) {
        Index dst = 0;
        for (std::size_t a = 0; a < full.size(); ++a) dst += idx[a] * strides[a];
        if (in[flat] > out[dst] || arg[dst] < 0) {
            out[dst] = in[flat];
            arg[dst] = flat;
        }
        for (std::size_t a = full.size(); a-- > 0;) {
            if (++idx[a] < full[a]) break;
            idx[a] = 0;
        }
    }
    return make_result(std::move(out), {x}, [arg = std::move(arg)](Node& self) {
        Tensor g(self.parents[0]->value.shape());
        for (std::size_t d = 0; d < arg.size(); ++d) g[arg[d]] += self.grad[static_cast<Index>(d)];
        self.parents[0]->accumulate(g);
    });
}

Var sum_all(const Var& x) {
    Real s = 0;
    for (Real v : x.value().data()) s += v;
    return make_result(Tensor::scalar(s), {x}, [](Node& self) {
        self.parents[0]->accumulate(Tensor::full(self.parents[0]->value.shape(), self.grad[0]));
    });
}

Var mean_all(const Var& x) { return mul_scalar(sum_all(x), Real(1) / static_cast<Real>(x.size())); }

Var softmax(const Var& x, Index axis) {
    const Tensor& in = x.value();
    if (axis < 0) axis += in.rank();
    if (axis < 0 || axis >= in.rank()) throw ShapeError("softmax axis invalid for shape " + shape_str(in.shape()));
    Index outer = 1;
    Index inner = 1;
    for (Index a = 0; a < axis; ++a) outer *= in.shape()[a];
    for (Index a = axis + 1; a < in.rank(); ++a) inner *= in.shape()[a];
    const Index n = in.shape()[axis];
    Tensor out(in.shape());
    for (Index o = 0; o < outer; ++o)
        for (Index i = 0; i < inner; ++i) {
            Real m = -std::numeric_limits<Real>::infinity();
            for (Index k = 0; k < n; ++k) m = std::max(m, in[(o * n + k) * inner + i]);
            Real z = 0;
            for (Index k = 0; k < n; ++k) z += (out[(o * n + k) * inner + i] = std::exp(in[(o * n + k) * inner + i] - m));
            for (Index k = 0; k < n; ++k) out[(o * n + k) * inner + i] /= z;
        }
    return make_result(std::move(out), {x}, [outer, inner, n](Node& self) {
        Tensor g(self.value.shape());
        for (Index o = 0; o < outer; ++o)
            for (Index i = 0; i < inner; ++i) {
                Real dot = 0;
                for (Index k = 0; k < n; ++k) {
                    const Index at = (o * n + k) * inner + i;
                    dot += self.grad[at] * self.value[at];
                }
                for (Index k = 0; k < n; ++k) {
                    const Index at = (o * n + k) * inner + i;
                    g[at] = self.value[at] * (self.grad[at] - dot);
                }
            }
        self.parents[0]->accumulate(g);
    });
}

// ---------------------------------------------------------------------------
// Pooling and resampling

Var avgpool2d(const Var& x, Index kernel, Index stride, Index padding) {
    check_rank(x, 3, "avgpool2d");
    const Index Ho = pooled_extent(x.dim(1), kernel, stride, padding, "avgpool2d");
    const Index Wo = pooled_extent(x.dim(2), kernel, stride, padding, "avgpool2d");
    return separable_resample(x, pool_taps(x.dim(1), Ho, kernel, stride, padding),
                              pool_taps(x.dim(2), Wo, kernel, stride, padding));
}

Var maxpool2d(const Var& x, Index kernel, Index stride, Index padding) {
    check_rank(x, 3, "maxpool2d");
    const Index C = x.dim(0);
    const Index H = x.dim(1);
    const Index W = x.dim(2);
    const Index Ho = pooled_extent(H, kernel, stride, padding, "maxpool2d");
    const Index Wo = pooled_extent(W, kernel, stride, padding, "maxpool2d");
    const Tensor& in = x.value();
    Tensor out({C, Ho, Wo});
    std::vector<Index> arg(static_cast<std::size_t>(out.size()), -1);
    for (Index c = 0; c < C; ++c)
        for (Index oy = 0; oy < Ho; ++oy)
            for (Index ox = 0; ox < Wo; ++ox) {
                Real best = -std::numeric_limits<Real>::infinity();
                Index best_at = -1;
                for (Index ky = 0; ky < kernel; ++ky) {
                    const Index iy = oy * stride - padding + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (Index kx = 0; kx < kernel; ++kx) {
                        const Index ix = ox * stride - padding + kx;
                        if (ix < 0 || ix >= W) continue;
                        const Index at = (c * H + iy) * W + ix;
                        if (best_at < 0 || in[at] > best) {
                            best = in[at];
                            best_at = at;
                        }
                    }
                }
                const Index o = (c * Ho + oy) * Wo + ox;
                out[o] = best;
                arg[o] = best_at;
            }
    return make_result(std::move(out), {x}, [arg = std::move(arg)](Node& self) {
        Tensor g(self.parents[0]->value.shape());
        for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += self.grad[static_cast<Index>(o)];
        self.parents[0]->accumulate(g);
    });
}

Var adaptive_avgpool2d(const Var& x, Index out_h, Index out_w) {
    check_rank(x, 3, "adaptive_avgpool2d");
    if (out_h <= 0 || out_w <= 0) throw ShapeError("adaptive_avgpool2d: output extents must be positive");
    return separable_resample(x, adaptive_taps(x.dim(1), out_h), adaptive_taps(x.dim(2), out_w));
}

Var upsample2d(const Var& x, Index factor, Interp mode) {
    check_rank(x, 3, "upsample2d");
    if (factor <= 0) throw ShapeError("upsample2d: factor must be positive");
    return resize2d(x, x.dim(1) * factor, x.dim(2) * factor, mode);
}

Var resize2d(const Var& x, Index out_h, Index out_w, Interp mode) {
    check_rank(x, 3, "resize2d");
    if (out_h <= 0 || out_w <= 0) throw ShapeError("resize2d: output extents must be positive");
    return separable_resample(x, interp_taps(x.dim(1), out_h, mode), interp_taps(x.dim(2), out_w, mode));
}

// ---------------------------------------------------------------------------
// Structural

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return make_result(std::move(out), {x}, [](Node& self) {
        self.parents[0]->accumulate(self.grad.reshaped(self.parents[0]->value.shape()));
    });
}

Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    Shape shape = parts[0].shape();
    Index rows = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
            throw ShapeError("concat: trailing shapes differ " + shape_str(s) + " vs " + shape_str(shape));
        }
        rows += s[0];
    }
    shape[0] = rows;
    Tensor out(shape);
    std::vector<Index> offsets;
    Index off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        std::copy(p.value().data().begin(), p.value().data().end(), out.raw() + off);
        off += p.size();
    }
    return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                       [offsets = std::move(offsets)](Node& self) {
                           for (std::size_t i = 0; i < self.parents.size(); ++i) {
                               auto& p = self.parents[i];
                               if (!p->requires_grad) continue;
                               Tensor g(p->value.shape());
                               std::copy_n(self.grad.raw() + offsets[i], g.size(), g.raw());
                               p->accumulate(g);
                           }
                       });
}

Var slice(const Var& x, Index begin, Index end) {
    const Index rows = x.dim(0);
    if (begin < 0 || end > rows || begin >= end) {
        throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                         shape_str(x.shape()));
    }
    const Index row_size = x.size() / rows;
    Shape shape = x.shape();
    shape[0] = end - begin;
    Tensor out(shape);
    std::copy_n(x.value().raw() + begin * row_size, out.size(), out.raw());
    return make_result(std::move(out), {x}, [begin, row_size](Node& self) {
        Tensor g(self.parents[0]->value.shape());
        std::copy_n(self.grad.raw(), self.grad.size(), g.raw() + begin * row_size);
        self.parents[0]->accumulate(g);
    });
}

Var gather_columns(const Var& x, std::span<const Index> index) {
    const Index C = x.dim(0);
    const Index L = x.size() / C;
    const Index K = static_cast<Index>(index.size());
    if (K == 0) throw ShapeError("gather_columns: empty index");
    for (Index i : index) {
        if (i < 0 || i >= L) throw ShapeError("gather_columns: index " + std::to_string(i) + " out of range");
    }
    Tensor out({C, K});
    const Real* src = x.value().raw();
    for (Index c = 0; c < C; ++c)
        for (Index k = 0; k < K; ++k) out[c * K + k] = src[c * L + index[k]];
    std::vector<Index> idx(index.begin(), index.end());
    return make_result(std::move(out), {x}, [idx = std::move(idx), C, L, K](Node& self) {
        Tensor g(self.parents[0]->value.shape());
        for (Index c = 0; c < C; ++c)
            for (Index k = 0; k < K; ++k) g[c * L + idx[k]] += self.grad[c * K + k];
        self.parents[0]->accumulate(g);
    });
}

Var space_to_channel(const Var& x, Index f) {
    check_rank(x, 3, "space_to_channel");
    const Index C = x.dim(0);
    const Index H = x.dim(1);
    const Index W = x.dim(2);
    if (f <= 0 || H % f != 0 || W % f != 0) {
        throw ShapeError("space_to_channel: " + shape_str(x.shape()) + " not divisible by " + std::to_string(f));
    }
    const Index Ho = H / f;
    const Index Wo = W / f;
    auto src_of = [=](Index oc, Index i, Index j) {
        const Index c = oc / (f * f);
        const Index dy = (oc / f) % f;
        const Index dx = oc % f;
        return (c * H + i * f + dy) * W + j * f + dx;
    };
    Tensor out({C * f * f, Ho, Wo});
    for (Index oc = 0; oc < C * f * f; ++oc)
        for (Index i = 0; i < Ho; ++i)
            for (Index j = 0; j < Wo; ++j) out[(oc * Ho + i) * Wo + j] = x.value()[src_of(oc, i, j)];
    return make_result(std::move(out), {x}, [=](Node& self) {
        Tensor g(self.parents[0]->value.shape());
        for (Index oc = 0; oc < C * f * f; ++oc)
            for (Index i = 0; i < Ho; ++i)
                for (Index j = 0; j < Wo; ++j) g[src_of(oc, i, j)] = self.grad[(oc * Ho + i) * Wo + j];
        self.parents[0]->accumulate(g);
    });
}

Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, Real eps) {
    const Index C = x.dim(0);
    if (gamma.size() != C || beta.size() != C) {
        throw ShapeError("layer_norm_channels: scale/shift must have " + std::to_string(C) + " entries");
    }
    const Index P = x.size() / C;
    const Real* px = x.value().raw();
    const Real* pg = gamma.value().raw();
    const Real* pb = beta.value().raw();
    Tensor out(x.shape());
    Tensor xhat(x.shape());
    std::vector<Real> inv_std(static_cast<std::size_t>(P));
    for (Index p = 0; p < P; ++p) {
        Real mu = 0;
        for (Index c = 0; c < C; ++c) mu += px[c * P + p];
        mu /= static_cast<Real>(C);
        Real var = 0;
        for (Index c = 0; c < C; ++c) {
            const Real d = px[c * P + p] - mu;
            var += d * d;
        }
        var /= static_cast<Real>(C);
        const Real is = Real(1) / std::sqrt(var + eps);
        inv_std[p] = is;
        for (Index c = 0; c < C; ++c) {
            const Real xh = (px[c * P + p] - mu) * is;
            xhat[c * P + p] = xh;
            out[c * P + p] = pg[c] * xh + pb[c];
        }
    }
    return make_result(std::move(out), {x, gamma, beta},
                       [C, P, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                           const Real* g = self.grad.raw();
                           const Real* pg = self.parents[1]->value.raw();
                           if (self.parents[0]->requires_grad) {
                               Tensor gx(self.value.shape());
                               for (Index p = 0; p < P; ++p) {
                                   Real s1 = 0;
                                   Real s2 = 0;
                                   for (Index c = 0; c < C; ++c) {
                                       const Real gh = g[c * P + p] * pg[c];
                                       s1 += gh;
                                       s2 += gh * xhat[c * P + p];
                                   }
                                   const Real n = static_cast<Real>(C);
                                   for (Index c = 0; c < C; ++c) {
                                       const Real gh = g[c * P + p] * pg[c];
                                       gx[c * P + p] = inv_std[p] * (gh - s1 / n - xhat[c * P + p] * s2 / n);
                                   }
                               }
                               self.parents[0]->accumulate(gx);
                           }
                           Tensor gg(self.parents[1]->value.shape());
                           Tensor gb(self.parents[2]->value.shape());
                           for (Index c = 0; c < C; ++c)
                               for (Index p = 0; p < P; ++p) {
                                   gg[c] += g[c * P + p] * xhat[c * P + p];
                                   gb[c] += g[c * P + p];
                               }
                           self.parents[1]->accumulate(gg);
                           self.parents[2]->accumulate(gb);
                       });
}

}  // namespace leaf
