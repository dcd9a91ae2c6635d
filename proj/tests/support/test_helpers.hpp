#pragma once

#include <cmath>
#include <vector>

#include "gnstk/rng.hpp"
#include "gnstk/tensor.hpp"

namespace gnstk::testing {

inline Tensor random_tensor(Shape shape, GaussianStream& g, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = scale * g.next();
    return t;
}

inline bool close(double a, double b, double rtol, double atol = 0.0) {
    return std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

inline bool tensors_close(const Tensor& a, const Tensor& b, double rtol, double atol = 0.0) {
    if (!a.same_shape(b)) return false;
    for (Index i = 0; i < a.size(); ++i)
        if (!close(a[i], b[i], rtol, atol)) return false;
    return true;
}

inline bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (Index i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace gnstk::testing
