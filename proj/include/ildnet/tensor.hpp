#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ildnet/errors.hpp"

namespace ildnet {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    if (s.empty()) return "scalar";
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(s[i]);
    }
    return out;
}

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

// Dense row-major tensor over float (training) or double (gradient checks).
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), T(0)) {}

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
        if (data_.size() != shape_size(shape_))
            throw ShapeError("tensor: " + std::to_string(data_.size()) + " values do not fill shape " +
                             shape_str(shape_));
    }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        for (T& v : t.data_) v = value;
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    T& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const T& at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    T& at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    const T& at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    // Same buffer under a new shape; element count must match exactly.
    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size())
            throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> v(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) v[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(v));
    }

    void ensure_finite(const char* label) const {
        for (const T& v : data_)
            if (!std::isfinite(v))
                throw NumericError(std::string(label) + ": non-finite value in tensor " + shape_str(shape_));
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
inline void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                         shape_str(t.shape()));
}

// C = A * B for row-major 2-D tensors. Each output element accumulates its
// k terms in ascending order (the k loop is outside the j loop), which pins
// the floating-point result bit for bit while keeping the inner loop
// contiguous for vectorization.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = pa + i * k;
        T* crow = pc + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            const T* brow = pb + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    out.ensure_finite("matmul");
    return out;
}

// C = A^T * B without materializing the transpose; A is MxP, B is MxN,
// C is PxN. Accumulation over m runs in ascending order per element.
template <typename T>
Tensor<T> matmul_at_b(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank(a, 2, "matmul_at_b");
    require_rank(b, 2, "matmul_at_b");
    if (a.dim(0) != b.dim(0))
        throw ShapeError("matmul_at_b: leading dimensions disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::size_t m = a.dim(0), p = a.dim(1), n = b.dim(1);
    Tensor<T> out({p, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = out.data();
    for (std::size_t mm = 0; mm < m; ++mm) {
        const T* arow = pa + mm * p;
        const T* brow = pb + mm * n;
        for (std::size_t i = 0; i < p; ++i) {
            const T av = arow[i];
            T* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    out.ensure_finite("matmul_at_b");
    return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    require_rank(a, 2, "transpose2d");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor<T> out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at2(j, i) = a.at2(i, j);
    return out;
}

// Pads the two spatial dimensions of an NHWC tensor with a constant.
template <typename T>
Tensor<T> pad2d(const Tensor<T>& x, std::size_t top, std::size_t bottom, std::size_t left,
                std::size_t right, T value = T(0)) {
    require_rank(x, 4, "pad2d");
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    Tensor<T> out = Tensor<T>::full({n, h + top + bottom, w + left + right, c}, value);
    const std::size_t row = w * c;
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t hi = 0; hi < h; ++hi) {
            const T* src = x.data() + (ni * h + hi) * row;
            T* dst = out.data() + ((ni * out.dim(1) + hi + top) * out.dim(2) + left) * c;
            for (std::size_t i = 0; i < row; ++i) dst[i] = src[i];
        }
    out.ensure_finite("pad2d");
    return out;
}

}  // namespace ildnet
