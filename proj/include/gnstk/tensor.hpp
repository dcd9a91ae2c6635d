#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace gnstk {

using Index = std::int64_t;
using Shape = std::vector<Index>;

/// Dense row-major tensor of 64-bit reals. Values are immutable by convention
/// once an operation has produced them; all free functions below are pure.
/// Reductions and contractions use a fixed summation order (the last summed
/// axis varies fastest) so results are bit-reproducible.
class Tensor {
public:
    /// Rank-0 tensor holding 0.
    Tensor() : data_(1, 0.0) {}

    /// Zero-filled tensor. Extents must be non-negative; a zero extent makes
    /// an empty tensor.
    explicit Tensor(Shape shape);

    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor full(Shape shape, double v);

    const Shape& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index size() const { return static_cast<Index>(data_.size()); }

    /// Row-major strides, one per axis.
    const std::vector<Index>& strides() const { return strides_; }

    std::span<const double> values() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](Index flat) { return data_[static_cast<std::size_t>(flat)]; }
    double operator[](Index flat) const { return data_[static_cast<std::size_t>(flat)]; }

    double& at(std::span<const Index> idx);
    double at(std::span<const Index> idx) const;
    double& at(std::initializer_list<Index> idx) { return at(std::span<const Index>(idx.begin(), idx.size())); }
    double at(std::initializer_list<Index> idx) const { return const_cast<Tensor*>(this)->at(idx); }

    /// The single element of a size-1 tensor.
    double item() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    Shape shape_;
    std::vector<Index> strides_;
    std::vector<double> data_;

    void init_strides();
};

/// Generalized contraction over named axes, e.g. "btk,btl->bkl".
/// Single-character labels; repeated labels must have equal extents; every
/// output label must occur in some input. Summed labels are ordered by first
/// appearance and the last one varies fastest.
Tensor contract(std::string_view spec, std::span<const Tensor> operands);
Tensor contract(std::string_view spec, const Tensor& a);
Tensor contract(std::string_view spec, const Tensor& a, const Tensor& b);

// Elementwise ops with trailing-axis broadcasting (extent-1 axes stretch,
// missing leading axes are implied).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor square(const Tensor& a);
Tensor scale(const Tensor& a, double c);

// Reductions over an axis set. Axes must be valid and distinct; an empty set
// reduces nothing. Reducing every axis yields a rank-0 tensor.
Tensor reduce_sum(const Tensor& a, std::span<const Index> axes);
Tensor reduce_mean(const Tensor& a, std::span<const Index> axes);
Tensor reduce_sqnorm(const Tensor& a, std::span<const Index> axes);

// Full reductions to a scalar value.
double sum_all(const Tensor& a);
double mean_all(const Tensor& a);
double sqnorm_all(const Tensor& a);

}  // namespace gnstk
