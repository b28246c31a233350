#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ttguide/rng.hpp"
#include "ttguide/types.hpp"

namespace ttguide {

/// Ordered mode sizes of a dense tensor. Nonempty, every entry >= 1.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}
    explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
        if (dims_.empty()) throw ShapeError("shape must have at least one mode");
        std::size_t n = 1;
        for (std::size_t d : dims_) {
            if (d == 0) throw ShapeError("shape modes must be >= 1, got " + to_string());
            if (n > std::numeric_limits<std::uint64_t>::max() / d)
                throw ShapeError("shape element count overflows 64 bits");
            n *= d;
        }
        numel_ = n;
    }

    std::size_t rank() const { return dims_.size(); }
    std::size_t operator[](std::size_t k) const { return dims_[k]; }
    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t numel() const { return numel_; }

    bool operator==(const Shape&) const = default;

    std::string to_string() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t k = 0; k < dims_.size(); ++k) os << (k ? "," : "") << dims_[k];
        os << ']';
        return os.str();
    }

private:
    std::vector<std::size_t> dims_;
    std::size_t numel_ = 0;
};

/// Dense row-major tensor (last index fastest). Values are finite after every
/// public operation; constructing from non-finite data throws NumericError.
template <typename Scalar>
class Tensor {
public:
    using scalar_type = Scalar;
    using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;
    using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;

    Tensor() = default;

    Tensor(Shape shape, std::vector<Scalar> values) : shape_(std::move(shape)), values_(std::move(values)) {
        if (values_.size() != shape_.numel())
            throw ShapeError("tensor of shape " + shape_.to_string() + " needs " +
                             std::to_string(shape_.numel()) + " values, got " +
                             std::to_string(values_.size()));
        check_finite();
    }

    static Tensor zeros(Shape shape) { return constant(std::move(shape), Scalar(0)); }

    static Tensor constant(Shape shape, Scalar value) {
        std::vector<Scalar> v(shape.numel(), value);
        return Tensor(std::move(shape), std::move(v));
    }

    template <typename Derived>
    static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
        RowMatrix<Scalar> rm = m;
        std::vector<Scalar> v(rm.data(), rm.data() + rm.size());
        return Tensor(Shape{static_cast<std::size_t>(rm.rows()), static_cast<std::size_t>(rm.cols())},
                      std::move(v));
    }

    static Tensor from_vector(std::vector<Scalar> v) {
        const std::size_t n = v.size();
        return Tensor(Shape{n}, std::move(v));
    }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return values_.size(); }
    std::span<const Scalar> values() const { return values_; }
    const Scalar* data() const { return values_.data(); }

    /// Raw mutable access for optimizers; call check_finite() after writing.
    std::span<Scalar> mutable_values() { return values_; }

    Scalar operator[](std::size_t flat) const { return values_[flat]; }

    Scalar operator()(std::size_t i, std::size_t j) const {
        return values_[i * shape_[shape_.rank() - 1] + j];
    }

    std::size_t rows() const { return require_rank2(), shape_[0]; }
    std::size_t cols() const { return require_rank2(), shape_[1]; }

    ConstMatrixMap matrix() const {
        require_rank2();
        return ConstMatrixMap(values_.data(), static_cast<Eigen::Index>(shape_[0]),
                              static_cast<Eigen::Index>(shape_[1]));
    }

    MatrixMap mutable_matrix() {
        require_rank2();
        return MatrixMap(values_.data(), static_cast<Eigen::Index>(shape_[0]),
                         static_cast<Eigen::Index>(shape_[1]));
    }

    void check_finite() const {
        for (Scalar x : values_)
            if (!std::isfinite(x)) throw NumericError("non-finite value in tensor of shape " + shape_.to_string());
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && values_ == o.values_; }

private:
    void require_rank2() const {
        if (shape_.rank() != 2) throw ShapeError("expected a rank-2 tensor, got " + shape_.to_string());
    }

    Shape shape_;
    std::vector<Scalar> values_;
};

using DenseTensor = Tensor<double>;

/// c = a * b with each c[i,j] accumulated over k = 0..q-1 in ascending order.
/// Because every output entry has a fixed summation order, a row of c depends
/// only on the matching row of a: batching never changes results.
template <typename Scalar, typename DA, typename DB>
RowMatrix<Scalar> gemm(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul inner dimensions differ: " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    RowMatrix<Scalar> c = RowMatrix<Scalar>::Zero(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index k = 0; k < a.cols(); ++k) {
            const Scalar aik = a(i, k);
            if (aik == Scalar(0)) continue;
            for (Eigen::Index j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.shape().rank() != 2 || b.shape().rank() != 2)
        throw ShapeError("matmul needs rank-2 operands, got " + a.shape().to_string() + " and " +
                         b.shape().to_string());
    if (a.cols() != b.rows())
        throw ShapeError("matmul shape mismatch: " + a.shape().to_string() + " * " + b.shape().to_string());
    return Tensor<Scalar>::from_matrix(gemm<Scalar>(a.matrix(), b.matrix()));
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& t, Shape shape) {
    if (shape.numel() != t.size())
        throw ShapeError("cannot reshape " + t.shape().to_string() + " to " + shape.to_string());
    return Tensor<Scalar>(std::move(shape), std::vector<Scalar>(t.values().begin(), t.values().end()));
}

/// ||a - b||_F / ||b||_F.
template <typename Scalar>
Scalar frob_rel_error(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (!(a.shape() == b.shape()))
        throw ShapeError("frob_rel_error shape mismatch: " + a.shape().to_string() + " vs " + b.shape().to_string());
    Scalar num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Scalar d = a[i] - b[i];
        num += d * d;
        den += b[i] * b[i];
    }
    if (den == Scalar(0)) throw NumericError("frob_rel_error: reference tensor has zero norm");
    return std::sqrt(num) / std::sqrt(den);
}

/// I.i.d. uniform on [-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename Scalar = double>
Tensor<Scalar> init_xavier_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
    if (fan_in == 0 || fan_out == 0) throw ShapeError("xavier init needs fan_in, fan_out >= 1");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    SplitMix64 rng(seed);
    std::vector<Scalar> v(shape.numel());
    for (auto& x : v) x = static_cast<Scalar>(bound * (2.0 * rng.uniform() - 1.0));
    return Tensor<Scalar>(shape, std::move(v));
}

/// I.i.d. standard normal (Box-Muller on SplitMix64).
template <typename Scalar = double>
Tensor<Scalar> init_gaussian(const Shape& shape, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<Scalar> v(shape.numel());
    for (auto& x : v) x = static_cast<Scalar>(rng.normal());
    return Tensor<Scalar>(shape, std::move(v));
}

} // namespace ttguide
