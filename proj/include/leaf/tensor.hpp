#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace leaf {

#ifdef LEAF_FLOAT32
using Real = float;
#else
using Real = double;
#endif

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

// Error taxonomy shared by every module.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string shape_str(const Shape& shape);

inline Index shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>{});
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowMatrixMap = Eigen::Map<RowMatrix<Scalar>>;

template <typename Scalar>
using ConstRowMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

/// Dense row-major N-d array. The last axis is the fastest-varying one.
template <typename Scalar>
class BasicTensor {
public:
    using value_type = Scalar;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
        validate_shape(shape_);
        data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
    }

    BasicTensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape(shape_);
        if (static_cast<Index>(data_.size()) != shape_numel(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
    static BasicTensor ones(Shape shape) { return BasicTensor(std::move(shape), Scalar(1)); }
    static BasicTensor full(Shape shape, Scalar v) { return BasicTensor(std::move(shape), v); }
    static BasicTensor scalar(Scalar v) { return BasicTensor(Shape{1}, v); }

    static BasicTensor from(Shape shape, std::initializer_list<Scalar> values) {
        return BasicTensor(std::move(shape), std::vector<Scalar>(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
    Index size() const noexcept { return static_cast<Index>(data_.size()); }
    bool empty() const noexcept { return data_.empty(); }

    Index dim(Index axis) const {
        if (axis < 0) axis += rank();
        if (axis < 0 || axis >= rank()) {
            throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
        }
        return shape_[static_cast<std::size_t>(axis)];
    }

    std::span<Scalar> data() & noexcept { return data_; }
    std::span<const Scalar> data() const& noexcept { return data_; }
    // A temporary hands over its storage so range-for over it stays valid.
    std::vector<Scalar> data() && noexcept { return std::move(data_); }
    Scalar* raw() noexcept { return data_.data(); }
    const Scalar* raw() const noexcept { return data_.data(); }

    Scalar& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
    Scalar operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

    template <typename... Ix>
    Scalar& at(Ix... ix) {
        return data_[static_cast<std::size_t>(offset({static_cast<Index>(ix)...}))];
    }
    template <typename... Ix>
    Scalar at(Ix... ix) const {
        return data_[static_cast<std::size_t>(offset({static_cast<Index>(ix)...}))];
    }

    Index offset(std::initializer_list<Index> ix) const {
        if (static_cast<Index>(ix.size()) != rank()) {
            throw ShapeError("index rank " + std::to_string(ix.size()) + " does not match shape " +
                             shape_str(shape_));
        }
        Index off = 0;
        std::size_t a = 0;
        for (Index i : ix) {
            if (i < 0 || i >= shape_[a]) {
                throw ShapeError("index " + std::to_string(i) + " out of range on axis " + std::to_string(a) +
                                 " of shape " + shape_str(shape_));
            }
            off = off * shape_[a] + i;
            ++a;
        }
        return off;
    }

    BasicTensor reshaped(Shape shape) const {
        validate_shape(shape);
        if (shape_numel(shape) != size()) {
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        }
        return BasicTensor(std::move(shape), data_);
    }

    /// Views the tensor as a (dim0, rest) row-major matrix.
    RowMatrixMap<Scalar> matrix() {
        const Index rows = rank() == 0 ? 1 : shape_[0];
        return RowMatrixMap<Scalar>(data_.data(), rows, rows == 0 ? 0 : size() / rows);
    }
    ConstRowMatrixMap<Scalar> matrix() const {
        const Index rows = rank() == 0 ? 1 : shape_[0];
        return ConstRowMatrixMap<Scalar>(data_.data(), rows, rows == 0 ? 0 : size() / rows);
    }

    Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> array() { return {data_.data(), size()}; }
    Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> array() const { return {data_.data(), size()}; }

    void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const BasicTensor& other) const = default;

private:
    static void validate_shape(const Shape& shape) {
        for (Index e : shape) {
            if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
        }
    }

    Shape shape_;
    std::vector<Scalar> data_;
};

using Tensor = BasicTensor<Real>;

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Strides of `shape` aligned to the trailing axes of `out`, zero on broadcast axes.
std::vector<Index> aligned_strides(const Shape& shape, const Shape& out);

/// Broadcast result shape under trailing-axis alignment, or ShapeError.
Shape broadcast_shape(const Shape& a, const Shape& b);

/// Sums `t` down to `target`, undoing a broadcast that produced t's shape.
Tensor reduce_to_shape(const Tensor& t, const Shape& target);

/// Explicitly tiles `t` up to `target` (used as a broadcasting oracle).
Tensor broadcast_to(const Tensor& t, const Shape& target);

Real max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace leaf
