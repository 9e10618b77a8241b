#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>

#include "ildnet/rng.hpp"
#include "ildnet/tensor.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kLayerTol = 1e-4;
inline constexpr double kEndToEndTol = 1e-3;

// Relative error with a floor so near-zero gradients compare absolutely.
inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

// Central difference of a scalar function with respect to one tensor entry.
inline double central_diff(ildnet::TensorD& x, std::size_t idx,
                           const std::function<double()>& f, double h = kStep) {
    const double orig = x[idx];
    x[idx] = orig + h;
    const double fp = f();
    x[idx] = orig - h;
    const double fm = f();
    x[idx] = orig;
    return (fp - fm) / (2.0 * h);
}

inline ildnet::TensorD random_tensor(ildnet::Rng& rng, ildnet::Shape shape, double lo = -1.0,
                                     double hi = 1.0) {
    ildnet::TensorD t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Scalar probe sum(coeffs * out); its gradient at out is exactly coeffs.
inline double weighted_sum(const ildnet::TensorD& out, const ildnet::TensorD& coeffs) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * coeffs[i];
    return s;
}

}  // namespace gradcheck
