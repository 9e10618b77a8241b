#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ildnet/data.hpp"
#include "ildnet/model.hpp"
#include "ildnet/tensor.hpp"

namespace ildnet {

enum class LossKind { cross_entropy, mean_squared_error };

struct TrainingConfig {
    double learning_rate = 0.00001;
    std::size_t batch_size = 32;
    std::size_t epochs = 50;
    LossKind loss = LossKind::cross_entropy;
    std::uint64_t seed = 0;
    // Fraction of the training set carved off per class for validation when
    // no separate validation set is supplied. 0 disables the carve.
    double validation_fraction = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("training: learning rate must be positive");
        if (batch_size < 2) throw ConfigError("training: batch size must be at least 2");
        if (validation_fraction < 0.0 || validation_fraction >= 1.0)
            throw ConfigError("training: validation fraction must lie in [0, 1)");
        if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
            throw ConfigError("training: Adam betas must lie in (0, 1)");
        if (epsilon <= 0.0) throw ConfigError("training: Adam epsilon must be positive");
    }
};

// ---------------------------------------------------------------------------
// Losses. probs rows must sum to 1, targets must be one-hot rows.
// ---------------------------------------------------------------------------

template <typename T>
void check_loss_inputs(const Tensor<T>& probs, const Tensor<T>& targets) {
    require_rank(probs, 2, "loss");
    if (probs.shape() != targets.shape())
        throw ShapeError("loss: probabilities " + shape_str(probs.shape()) + " vs targets " +
                         shape_str(targets.shape()));
    if (probs.dim(0) == 0) throw ShapeError("loss: empty batch");
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        T psum = T(0), tsum = T(0);
        std::size_t ones = 0;
        for (std::size_t j = 0; j < k; ++j) {
            psum += probs.at2(i, j);
            const T tv = targets.at2(i, j);
            tsum += tv;
            if (tv == T(1)) ++ones;
            else if (tv != T(0))
                throw DataError("loss: target row " + std::to_string(i) + " is not one-hot");
        }
        if (ones != 1 || tsum != T(1))
            throw DataError("loss: target row " + std::to_string(i) + " is not one-hot");
        if (std::abs(double(psum) - 1.0) > 1e-5)
            throw DataError("loss: probability row " + std::to_string(i) + " sums to " +
                            std::to_string(double(psum)));
    }
}

// Mean over the batch of -log p(true class); probabilities are clamped to
// [1e-12, 1] before the log.
template <typename T>
T cross_entropy(const Tensor<T>& probs, const Tensor<T>& targets) {
    check_loss_inputs(probs, targets);
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    T total = T(0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (targets.at2(i, j) == T(1)) {
                T p = probs.at2(i, j);
                if (p < T(1e-12)) p = T(1e-12);
                if (p > T(1)) p = T(1);
                total += -std::log(p);
            }
    return total / static_cast<T>(n);
}

// Gradient of mean cross entropy at the pre-softmax logits: (p - y)/N.
template <typename T>
Tensor<T> cross_entropy_softmax_grad(const Tensor<T>& logits, const Tensor<T>& targets) {
    Tensor<T> probs = softmax(logits);
    check_loss_inputs(probs, targets);
    const std::size_t n = probs.dim(0);
    Tensor<T> d(probs.shape());
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = (probs[i] - targets[i]) / static_cast<T>(n);
    return d;
}

// Mean over all N*K entries of (p - y)^2.
template <typename T>
T mse_loss(const Tensor<T>& probs, const Tensor<T>& targets) {
    check_loss_inputs(probs, targets);
    T total = T(0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const T d = probs[i] - targets[i];
        total += d * d;
    }
    return total / static_cast<T>(probs.size());
}

// Pulls a gradient at the probabilities back through the softmax Jacobian:
// dz_i = p_i * (dp_i - sum_j dp_j p_j), row by row.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& probs, const Tensor<T>& d_probs) {
    require_rank(probs, 2, "softmax backward");
    if (probs.shape() != d_probs.shape())
        throw ShapeError("softmax backward: " + shape_str(probs.shape()) + " vs " +
                         shape_str(d_probs.shape()));
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    Tensor<T> dz(probs.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const T* p = probs.data() + i * k;
        const T* dp = d_probs.data() + i * k;
        T dot = T(0);
        for (std::size_t j = 0; j < k; ++j) dot += dp[j] * p[j];
        T* out = dz.data() + i * k;
        for (std::size_t j = 0; j < k; ++j) out[j] = p[j] * (dp[j] - dot);
    }
    return dz;
}

// Gradient of mean squared error on softmax outputs at the logits.
template <typename T>
Tensor<T> mse_softmax_grad(const Tensor<T>& logits, const Tensor<T>& targets) {
    Tensor<T> probs = softmax(logits);
    check_loss_inputs(probs, targets);
    Tensor<T> d_probs(probs.shape());
    const T scale = T(2) / static_cast<T>(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) d_probs[i] = scale * (probs[i] - targets[i]);
    return softmax_backward(probs, d_probs);
}

template <typename T>
Tensor<T> one_hot(const std::vector<std::size_t>& labels, std::size_t k) {
    Tensor<T> t({labels.size(), k});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= k)
            throw DataError("one_hot: label " + std::to_string(labels[i]) + " outside " +
                            std::to_string(k) + " classes");
        t.at2(i, labels[i]) = T(1);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Adam. One state slot per trainable tensor; t advances once per step.
// ---------------------------------------------------------------------------

template <typename T>
class AdamState {
public:
    AdamState(const std::vector<Tensor<T>*>& params, double beta1, double beta2, double epsilon)
        : beta1_(static_cast<T>(beta1)), beta2_(static_cast<T>(beta2)), epsilon_(static_cast<T>(epsilon)) {
        for (const Tensor<T>* p : params) {
            m_.emplace_back(p->shape());
            v_.emplace_back(p->shape());
        }
    }

    std::uint64_t step_count() const { return t_; }

    // p -= lr * m_hat / (sqrt(v_hat) + eps), with bias-corrected moments.
    // beta powers are tracked by running products rather than pow() so the
    // arithmetic is identical on every libm.
    void step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, T lr) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw ShapeError("adam: expected " + std::to_string(m_.size()) + " tensors, got " +
                             std::to_string(params.size()) + " parameters and " +
                             std::to_string(grads.size()) + " gradients");
        ++t_;
        beta1_t_ *= beta1_;
        beta2_t_ *= beta2_;
        const T c1 = T(1) - beta1_t_;
        const T c2 = T(1) - beta2_t_;
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            Tensor<T>& p = *params[pi];
            const Tensor<T>& g = grads[pi];
            if (g.shape() != p.shape())
                throw ShapeError("adam: gradient " + shape_str(g.shape()) + " does not match parameter " +
                                 shape_str(p.shape()));
            Tensor<T>& m = m_[pi];
            Tensor<T>& v = v_[pi];
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = beta1_ * m[i] + (T(1) - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (T(1) - beta2_) * g[i] * g[i];
                const T m_hat = m[i] / c1;
                const T v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (std::sqrt(v_hat) + epsilon_);
            }
        }
    }

private:
    T beta1_, beta2_, epsilon_;
    T beta1_t_ = T(1), beta2_t_ = T(1);
    std::uint64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> val_loss;
    std::optional<double> val_accuracy;
};

// Runs the Adam loop: per epoch, a seeded reshuffle, fixed-size batches
// (a trailing batch of one sample is dropped), forward/backward/step, then a
// full inference pass over the validation split. Train loss and accuracy are
// sample-weighted running averages over the epoch's train-mode batches.
// If val is null and cfg.validation_fraction > 0, a stratified slice of the
// training data is held out instead.
std::vector<EpochRecord> fit(NetworkF& net, const Dataset& train, const Dataset* val,
                             const TrainingConfig& cfg);

// Loss and accuracy of a network on a labeled set, inference mode, batched.
std::pair<double, double> evaluate_loss(NetworkF& net, const Dataset& data, LossKind loss,
                                        std::size_t batch_size);

// Label predictions for a dataset, inference mode, batched.
std::vector<std::size_t> predict_labels(const NetworkF& net, const TensorF& x, std::size_t batch_size);

// epoch,train_loss,train_acc,val_loss,val_acc per row; missing validation
// fields stay empty.
void write_curves_csv(const std::string& path, const std::vector<EpochRecord>& records);

}  // namespace ildnet
