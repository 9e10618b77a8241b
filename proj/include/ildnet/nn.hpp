#pragma once

#include <cstdint>
#include <vector>

#include "ildnet/rng.hpp"
#include "ildnet/tensor.hpp"

namespace ildnet {

enum class Mode { train, infer };

// ---------------------------------------------------------------------------
// Convolution, stride 1, zero "same" padding, square odd kernels.
// Layouts: input NHWC, weights KhKwCinCout, bias Cout.
// ---------------------------------------------------------------------------

template <typename T>
struct Conv2dParams {
    Tensor<T> weights;  // Kh x Kw x Cin x Cout
    Tensor<T> bias;     // Cout

    void validate() const {
        require_rank(weights, 4, "conv2d");
        const std::size_t kh = weights.dim(0), kw = weights.dim(1);
        if (kh != kw || (kh != 3 && kh != 5 && kh != 7))
            throw ShapeError("conv2d: kernel must be square 3, 5, or 7, got " + shape_str(weights.shape()));
        require_rank(bias, 1, "conv2d");
        if (bias.dim(0) != weights.dim(3))
            throw ShapeError("conv2d: bias length " + std::to_string(bias.dim(0)) +
                             " does not match " + std::to_string(weights.dim(3)) + " filters");
    }
};

template <typename T>
struct Conv2dGrads {
    Tensor<T> input;
    Tensor<T> weights;
    Tensor<T> bias;
};

// Unfolds each output position's receptive field into one row: row index
// (n*H + oh)*W + ow, columns ordered (kh, kw, cin). Out-of-image taps stay 0.
template <typename T>
Tensor<T> im2col_same(const Tensor<T>& x, std::size_t k) {
    require_rank(x, 4, "im2col");
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const std::size_t pad = (k - 1) / 2;
    Tensor<T> cols({n * h * w, k * k * c});
    T* out = cols.data();
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t oh = 0; oh < h; ++oh)
            for (std::size_t ow = 0; ow < w; ++ow) {
                T* row = out;
                for (std::size_t kh = 0; kh < k; ++kh) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) - static_cast<std::ptrdiff_t>(pad);
                    for (std::size_t kw = 0; kw < k; ++kw, row += c) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kw) - static_cast<std::ptrdiff_t>(pad);
                        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h) || iw < 0 ||
                            iw >= static_cast<std::ptrdiff_t>(w))
                            continue;  // cols starts zeroed
                        const T* src = x.data() + ((ni * h + static_cast<std::size_t>(ih)) * w +
                                                   static_cast<std::size_t>(iw)) * c;
                        for (std::size_t ci = 0; ci < c; ++ci) row[ci] = src[ci];
                    }
                }
                out += k * k * c;
            }
    return cols;
}

// Folds column gradients back onto the input image, accumulating overlaps in
// ascending row-major column order so the summation order is fixed.
template <typename T>
Tensor<T> col2im_same(const Tensor<T>& cols, const Shape& x_shape, std::size_t k) {
    const std::size_t n = x_shape[0], h = x_shape[1], w = x_shape[2], c = x_shape[3];
    const std::size_t pad = (k - 1) / 2;
    Tensor<T> dx(x_shape);
    const T* in = cols.data();
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t oh = 0; oh < h; ++oh)
            for (std::size_t ow = 0; ow < w; ++ow) {
                const T* row = in;
                for (std::size_t kh = 0; kh < k; ++kh) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) - static_cast<std::ptrdiff_t>(pad);
                    for (std::size_t kw = 0; kw < k; ++kw, row += c) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kw) - static_cast<std::ptrdiff_t>(pad);
                        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h) || iw < 0 ||
                            iw >= static_cast<std::ptrdiff_t>(w))
                            continue;
                        T* dst = dx.data() + ((ni * h + static_cast<std::size_t>(ih)) * w +
                                              static_cast<std::size_t>(iw)) * c;
                        for (std::size_t ci = 0; ci < c; ++ci) dst[ci] += row[ci];
                    }
                }
                in += k * k * c;
            }
    return dx;
}

template <typename T>
Tensor<T> conv2d_forward_cols(const Tensor<T>& cols, const Shape& x_shape, const Conv2dParams<T>& p) {
    const std::size_t k = p.weights.dim(0), cin = p.weights.dim(2), cout = p.weights.dim(3);
    Tensor<T> w2d = p.weights.reshaped({k * k * cin, cout});
    Tensor<T> y2d = matmul(cols, w2d);
    T* y = y2d.data();
    const T* b = p.bias.data();
    for (std::size_t m = 0; m < y2d.dim(0); ++m, y += cout)
        for (std::size_t co = 0; co < cout; ++co) y[co] += b[co];
    return y2d.reshaped({x_shape[0], x_shape[1], x_shape[2], cout});
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Conv2dParams<T>& p) {
    p.validate();
    require_rank(x, 4, "conv2d");
    if (x.dim(3) != p.weights.dim(2))
        throw ShapeError("conv2d: input channels " + std::to_string(x.dim(3)) +
                         " do not match weight channels " + std::to_string(p.weights.dim(2)));
    return conv2d_forward_cols(im2col_same(x, p.weights.dim(0)), x.shape(), p);
}

// Backward from cached im2col rows. dW accumulates over patch rows in
// ascending order; dX accumulates overlapping taps in ascending row order.
template <typename T>
Conv2dGrads<T> conv2d_backward_cols(const Tensor<T>& cols, const Shape& x_shape,
                                    const Conv2dParams<T>& p, const Tensor<T>& d_out) {
    const std::size_t k = p.weights.dim(0), cin = p.weights.dim(2), cout = p.weights.dim(3);
    Tensor<T> d2d = d_out.reshaped({x_shape[0] * x_shape[1] * x_shape[2], cout});

    Conv2dGrads<T> g;
    g.weights = matmul_at_b(cols, d2d).reshaped({k, k, cin, cout});

    g.bias = Tensor<T>({cout});
    const T* d = d2d.data();
    for (std::size_t m = 0; m < d2d.dim(0); ++m, d += cout)
        for (std::size_t co = 0; co < cout; ++co) g.bias[co] += d[co];

    Tensor<T> wt = transpose2d(p.weights.reshaped({k * k * cin, cout}));
    g.input = col2im_same(matmul(d2d, wt), x_shape, k);
    return g;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Conv2dParams<T>& p, const Tensor<T>& d_out) {
    p.validate();
    return conv2d_backward_cols(im2col_same(x, p.weights.dim(0)), x.shape(), p, d_out);
}

// ---------------------------------------------------------------------------
// Batch normalization over the channel axis of an NHWC tensor.
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormParams {
    Tensor<T> gamma;         // C, trainable scale
    Tensor<T> beta;          // C, trainable shift
    Tensor<T> running_mean;  // C
    Tensor<T> running_var;   // C
    T momentum = T(0.99);
    T epsilon = T(1e-5);
};

template <typename T>
struct BatchNormCache {
    Tensor<T> x_hat;            // normalized input, same shape as x
    std::vector<T> mean;        // per channel
    std::vector<T> inv_std;     // per channel, 1/sqrt(var + eps)
    std::size_t per_channel = 0;
};

template <typename T>
struct BatchNormGrads {
    Tensor<T> input;
    Tensor<T> gamma;
    Tensor<T> beta;
};

template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& x, const BatchNormParams<T>& p) {
    require_rank(x, 4, "batchnorm");
    const std::size_t c = x.dim(3);
    if (c != p.gamma.dim(0))
        throw ShapeError("batchnorm: " + std::to_string(c) + " channels vs " +
                         std::to_string(p.gamma.dim(0)) + " parameters");
    Tensor<T> y(x.shape());
    std::vector<T> scale(c), shift(c);
    for (std::size_t ci = 0; ci < c; ++ci) {
        scale[ci] = p.gamma[ci] / std::sqrt(p.running_var[ci] + p.epsilon);
        shift[ci] = p.beta[ci] - scale[ci] * p.running_mean[ci];
    }
    const T* px = x.data();
    T* py = y.data();
    const std::size_t total = x.size();
    for (std::size_t i = 0; i < total; ++i) py[i] = px[i] * scale[i % c] + shift[i % c];
    return y;
}

// Train mode normalizes with biased batch statistics, updates the running
// estimates r = momentum*r + (1-momentum)*batch, and fills the cache for the
// backward pass. Infer mode uses the stored running statistics and leaves the
// parameters untouched.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormParams<T>& p, Mode mode,
                            BatchNormCache<T>* cache = nullptr) {
    if (mode == Mode::infer) return batchnorm_infer(x, p);
    require_rank(x, 4, "batchnorm");
    const std::size_t c = x.dim(3);
    if (c != p.gamma.dim(0))
        throw ShapeError("batchnorm: " + std::to_string(c) + " channels vs " +
                         std::to_string(p.gamma.dim(0)) + " parameters");
    const std::size_t m = x.dim(0) * x.dim(1) * x.dim(2);
    if (m < 2)
        throw ShapeError("batchnorm: train mode needs at least 2 values per channel, got " +
                         std::to_string(m));

    std::vector<T> mean(c, T(0)), var(c, T(0));
    const T* px = x.data();
    const std::size_t total = x.size();
    for (std::size_t i = 0; i < total; ++i) mean[i % c] += px[i];
    for (std::size_t ci = 0; ci < c; ++ci) mean[ci] /= static_cast<T>(m);
    for (std::size_t i = 0; i < total; ++i) {
        const T d = px[i] - mean[i % c];
        var[i % c] += d * d;
    }
    for (std::size_t ci = 0; ci < c; ++ci) var[ci] /= static_cast<T>(m);

    std::vector<T> inv_std(c);
    for (std::size_t ci = 0; ci < c; ++ci) inv_std[ci] = T(1) / std::sqrt(var[ci] + p.epsilon);

    Tensor<T> x_hat(x.shape());
    Tensor<T> y(x.shape());
    T* ph = x_hat.data();
    T* py = y.data();
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t ci = i % c;
        ph[i] = (px[i] - mean[ci]) * inv_std[ci];
        py[i] = p.gamma[ci] * ph[i] + p.beta[ci];
    }

    for (std::size_t ci = 0; ci < c; ++ci) {
        p.running_mean[ci] = p.momentum * p.running_mean[ci] + (T(1) - p.momentum) * mean[ci];
        p.running_var[ci] = p.momentum * p.running_var[ci] + (T(1) - p.momentum) * var[ci];
    }

    if (cache) {
        cache->x_hat = std::move(x_hat);
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
        cache->per_channel = m;
    }
    return y;
}

// dX_i = gamma*inv_std*(dY_i - (s1 + x_hat_i*s2)/m) with s1 = sum dY,
// s2 = sum dY*x_hat per channel; dGamma = s2, dBeta = s1.
template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& /*x*/, const BatchNormParams<T>& p,
                                     const Tensor<T>& d_out, const BatchNormCache<T>& cache) {
    const Shape& shape = cache.x_hat.shape();
    const std::size_t c = shape[3];
    const std::size_t m = cache.per_channel;
    const std::size_t total = cache.x_hat.size();
    if (d_out.shape() != shape)
        throw ShapeError("batchnorm backward: gradient shape " + shape_str(d_out.shape()) +
                         " does not match input " + shape_str(shape));

    std::vector<T> s1(c, T(0)), s2(c, T(0));
    const T* pd = d_out.data();
    const T* ph = cache.x_hat.data();
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t ci = i % c;
        s1[ci] += pd[i];
        s2[ci] += pd[i] * ph[i];
    }

    BatchNormGrads<T> g;
    g.gamma = Tensor<T>({c});
    g.beta = Tensor<T>({c});
    for (std::size_t ci = 0; ci < c; ++ci) {
        g.gamma[ci] = s2[ci];
        g.beta[ci] = s1[ci];
    }

    g.input = Tensor<T>(shape);
    T* pi = g.input.data();
    const T inv_m = T(1) / static_cast<T>(m);
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t ci = i % c;
        pi[i] = p.gamma[ci] * cache.inv_std[ci] * (pd[i] - (s1[ci] + ph[i] * s2[ci]) * inv_m);
    }
    return g;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2.
// ---------------------------------------------------------------------------

template <typename T>
struct MaxPoolResult {
    Tensor<T> output;                // N x H/2 x W/2 x C
    std::vector<std::size_t> argmax; // flat input index of each window winner
};

template <typename T>
MaxPoolResult<T> maxpool2d(const Tensor<T>& x) {
    require_rank(x, 4, "maxpool2d");
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (h % 2 || w % 2)
        throw ShapeError("maxpool2d: spatial dimensions must be even, got " + shape_str(x.shape()));
    MaxPoolResult<T> r;
    r.output = Tensor<T>({n, h / 2, w / 2, c});
    r.argmax.resize(r.output.size());
    T* py = r.output.data();
    std::size_t o = 0;
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t oh = 0; oh < h / 2; ++oh)
            for (std::size_t ow = 0; ow < w / 2; ++ow)
                for (std::size_t ci = 0; ci < c; ++ci, ++o) {
                    // Window scanned row-major; strict > keeps the first of
                    // equal values, so ties break toward the lowest index.
                    std::size_t best = ((ni * h + 2 * oh) * w + 2 * ow) * c + ci;
                    T bv = x[best];
                    const std::size_t cand[3] = {best + c, best + w * c, best + w * c + c};
                    for (std::size_t t = 0; t < 3; ++t)
                        if (x[cand[t]] > bv) {
                            bv = x[cand[t]];
                            best = cand[t];
                        }
                    py[o] = bv;
                    r.argmax[o] = best;
                }
    return r;
}

// Routes each output gradient to the recorded winner; other positions get 0.
template <typename T>
Tensor<T> maxpool2d_backward(const Shape& x_shape, const std::vector<std::size_t>& argmax,
                             const Tensor<T>& d_out) {
    Tensor<T> dx(x_shape);
    if (argmax.size() != d_out.size())
        throw ShapeError("maxpool2d backward: " + std::to_string(argmax.size()) + " winners vs " +
                         std::to_string(d_out.size()) + " gradients");
    for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += d_out[o];
    return dx;
}

// ---------------------------------------------------------------------------
// ReLU.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
}

// Subgradient 0 at exactly 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& d_out) {
    if (x.shape() != d_out.shape())
        throw ShapeError("relu backward: gradient shape " + shape_str(d_out.shape()) +
                         " does not match input " + shape_str(x.shape()));
    Tensor<T> dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? d_out[i] : T(0);
    return dx;
}

// ---------------------------------------------------------------------------
// Inverted dropout. Survivors are scaled by 1/(1-rate) so the expected
// activation is unchanged; infer mode is the identity.
// ---------------------------------------------------------------------------

template <typename T>
struct DropoutResult {
    Tensor<T> output;
    Tensor<T> mask;  // 0 for dropped, 1/(1-rate) for kept
};

template <typename T>
DropoutResult<T> dropout(const Tensor<T>& x, double rate, Mode mode, std::uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    DropoutResult<T> r;
    if (mode == Mode::infer || rate == 0.0) {
        r.output = x;
        r.mask = Tensor<T>::full(x.shape(), T(1));
        return r;
    }
    r.output = Tensor<T>(x.shape());
    r.mask = Tensor<T>(x.shape());
    Rng rng(seed);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T mv = rng.uniform() >= rate ? keep_scale : T(0);
        r.mask[i] = mv;
        r.output[i] = x[i] * mv;
    }
    return r;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& d_out, const Tensor<T>& mask) {
    if (d_out.shape() != mask.shape())
        throw ShapeError("dropout backward: gradient shape " + shape_str(d_out.shape()) +
                         " does not match mask " + shape_str(mask.shape()));
    Tensor<T> dx(d_out.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = d_out[i] * mask[i];
    return dx;
}

// ---------------------------------------------------------------------------
// Dense (fully connected): y = xW + b with x NxIn, W InxOut, b Out.
// ---------------------------------------------------------------------------

template <typename T>
struct DenseParams {
    Tensor<T> weights;  // In x Out
    Tensor<T> bias;     // Out
};

template <typename T>
struct DenseGrads {
    Tensor<T> input;
    Tensor<T> weights;
    Tensor<T> bias;
};

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const DenseParams<T>& p) {
    require_rank(x, 2, "dense");
    if (x.dim(1) != p.weights.dim(0))
        throw ShapeError("dense: input width " + std::to_string(x.dim(1)) +
                         " does not match weights " + shape_str(p.weights.shape()));
    if (p.bias.dim(0) != p.weights.dim(1))
        throw ShapeError("dense: bias length " + std::to_string(p.bias.dim(0)) +
                         " does not match weights " + shape_str(p.weights.shape()));
    Tensor<T> y = matmul(x, p.weights);
    const std::size_t out = y.dim(1);
    T* py = y.data();
    for (std::size_t i = 0; i < y.dim(0); ++i, py += out)
        for (std::size_t j = 0; j < out; ++j) py[j] += p.bias[j];
    return y;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const DenseParams<T>& p, const Tensor<T>& d_out) {
    DenseGrads<T> g;
    g.weights = matmul_at_b(x, d_out);
    g.input = matmul(d_out, transpose2d(p.weights));
    g.bias = Tensor<T>({d_out.dim(1)});
    const T* pd = d_out.data();
    for (std::size_t i = 0; i < d_out.dim(0); ++i, pd += d_out.dim(1))
        for (std::size_t j = 0; j < d_out.dim(1); ++j) g.bias[j] += pd[j];
    return g;
}

// ---------------------------------------------------------------------------
// Row-wise softmax with max subtraction for overflow safety.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& z) {
    require_rank(z, 2, "softmax");
    const std::size_t n = z.dim(0), k = z.dim(1);
    Tensor<T> p(z.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = z.data() + i * k;
        T* out = p.data() + i * k;
        T mx = row[0];
        for (std::size_t j = 1; j < k; ++j)
            if (row[j] > mx) mx = row[j];
        T sum = T(0);
        for (std::size_t j = 0; j < k; ++j) {
            out[j] = std::exp(row[j] - mx);
            sum += out[j];
        }
        for (std::size_t j = 0; j < k; ++j) out[j] /= sum;
    }
    p.ensure_finite("softmax");
    return p;
}

}  // namespace ildnet
