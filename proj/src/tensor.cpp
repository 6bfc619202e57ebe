#include "leaf/tensor.hpp"

#include <cmath>

namespace leaf {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const Index ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const Index eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (ea != eb && ea != 1 && eb != 1) {
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcastable");
        }
        out[i] = std::max(ea, eb);
    }
    return out;
}

std::vector<Index> aligned_strides(const Shape& shape, const Shape& out) {
    std::vector<Index> strides(out.size(), 0);
    Index stride = 1;
    const std::size_t lead = out.size() - shape.size();
    for (std::size_t i = shape.size(); i-- > 0;) {
        if (shape[i] != 1) strides[i + lead] = stride;
        stride *= shape[i];
    }
    return strides;
}

Tensor broadcast_to(const Tensor& t, const Shape& target) {
    if (broadcast_shape(t.shape(), target) != target) {
        throw ShapeError("cannot broadcast " + shape_str(t.shape()) + " to " + shape_str(target));
    }
    Tensor out(target);
    const auto strides = aligned_strides(t.shape(), target);
    std::vector<Index> idx(target.size(), 0);
    for (Index flat = 0; flat < out.size(); ++flat) {
        Index src = 0;
        for (std::size_t a = 0; a < target.size(); ++a) src += idx[a] * strides[a];
        out[flat] = t[src];
        for (std::size_t a = target.size(); a-- > 0;) {
            if (++idx[a] < target[a]) break;
            idx[a] = 0;
        }
    }
    return out;
}

Tensor reduce_to_shape(const Tensor& t, const Shape& target) {
    if (t.shape() == target) return t;
    if (broadcast_shape(target, t.shape()) != t.shape()) {
        throw ShapeError("cannot reduce " + shape_str(t.shape()) + " to " + shape_str(target));
    }
    Tensor out(target);
    const auto strides = aligned_strides(target, t.shape());
    const Shape& full = t.shape();
    std::vector<Index> idx(full.size(), 0);
    for (Index flat = 0; flat < t.size(); ++flat) {
        Index dst = 0;
        for (std::size_t a = 0; a < full.size(); ++a) dst += idx[a] * strides[a];
        out[dst] += t[flat];
        for (std::size_t a = full.size(); a-- > 0;) {
            if (++idx[a] < full[a]) break;
            idx[a] = 0;
        }
    }
    return out;
}

Real max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("max_abs_diff shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Real m = 0;
    for (Index i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](Real v) { return std::isfinite(v); });
}

}  // namespace leaf
