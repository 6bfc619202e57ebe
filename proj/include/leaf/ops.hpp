#pragma once

#include "leaf/autodiff.hpp"

#include <span>
#include <vector>

namespace leaf {

// Elementwise, with trailing-axis broadcasting for the binary forms.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& a, Real s);
Var mul_scalar(const Var& a, Real s);

Var neg(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sigmoid(const Var& a);
Var silu(const Var& a);
Var relu(const Var& a);
Var softplus(const Var& a);
Var square(const Var& a);
Var clamp(const Var& a, Real lo, Real hi);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator+(const Var& a, Real s) { return add_scalar(a, s); }
inline Var operator*(const Var& a, Real s) { return mul_scalar(a, s); }
inline Var operator*(Real s, const Var& a) { return mul_scalar(a, s); }

/// Plain 2-D matrix product [m,k] x [k,n].
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

struct Conv2dOptions {
    Index stride = 1;
    Index padding = 0;
    Index groups = 1;
};

/// Cross-correlation of x[C_in,H,W] with w[C_out,C_in/groups,kh,kw], zero padded.
Var conv2d(const Var& x, const Var& w, Conv2dOptions opt = {});

// Reductions keep reduced axes as size-1 extents.
Var sum(const Var& x, std::span<const Index> axes);
Var mean(const Var& x, std::span<const Index> axes);
Var max(const Var& x, std::span<const Index> axes);
inline Var sum(const Var& x, std::initializer_list<Index> axes) { return sum(x, std::span(axes.begin(), axes.size())); }
inline Var mean(const Var& x, std::initializer_list<Index> axes) { return mean(x, std::span(axes.begin(), axes.size())); }
inline Var max(const Var& x, std::initializer_list<Index> axes) { return max(x, std::span(axes.begin(), axes.size())); }
/// Sum over every element, shape [1].
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var softmax(const Var& x, Index axis);

/// Average pooling over [C,H,W]; padded cells count as zeros in the mean.
Var avgpool2d(const Var& x, Index kernel, Index stride, Index padding = 0);
/// Max pooling over [C,H,W]; padded cells never win.
Var maxpool2d(const Var& x, Index kernel, Index stride, Index padding = 0);
Var adaptive_avgpool2d(const Var& x, Index out_h, Index out_w);

enum class Interp { Nearest, Bilinear };

Var upsample2d(const Var& x, Index factor, Interp mode = Interp::Nearest);
/// Resamples [C,H,W] to [C,out_h,out_w]; bilinear uses half-pixel centers.
Var resize2d(const Var& x, Index out_h, Index out_w, Interp mode = Interp::Nearest);

Var reshape(const Var& x, Shape shape);
/// Concatenates along axis 0.
Var concat(std::span<const Var> parts);
inline Var concat(std::initializer_list<Var> parts) { return concat(std::span(parts.begin(), parts.size())); }
/// Rows [begin, end) along axis 0.
Var slice(const Var& x, Index begin, Index end);
/// out[c, k] = x[c, index[k]] for x viewed as [C, L].
Var gather_columns(const Var& x, std::span<const Index> index);
/// 2x2 (or f x f) space-to-channel rearrangement of [C,H,W] into [C*f*f,H/f,W/f].
Var space_to_channel(const Var& x, Index factor);

/// Normalizes x[C, ...] over axis 0 at every position, then scale/shift per channel.
Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, Real eps = Real(1e-5));

/// Applies w[out,in] (and bias[out]) across axis 0 of x[in, ...].
Var linear_channels(const Var& x, const Var& w, const Var* bias = nullptr);

}  // namespace leaf
