#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ildnet/nn.hpp"
#include "ildnet/rng.hpp"
#include "ildnet/tensor.hpp"

namespace ildnet {

struct ConvBlockSpec {
    std::size_t filters = 0;
    std::size_t kernel = 0;
};

// Network layout: conv blocks (conv -> batchnorm -> relu -> maxpool), flatten,
// hidden dense stages (dense -> relu -> dropout), output dense with softmax.
struct ArchitectureSpec {
    std::vector<ConvBlockSpec> conv_blocks{{32, 7}, {64, 5}, {96, 3}, {128, 3}};
    std::vector<std::size_t> dense_units{1024, 512, 256};
    std::vector<double> dropout_rates{0.25, 0.40, 0.40};
    std::size_t num_classes = 5;
    std::size_t input_height = 32;
    std::size_t input_width = 32;
    std::size_t input_channels = 3;

    void validate() const {
        if (conv_blocks.empty()) throw ConfigError("architecture: no conv blocks");
        for (const ConvBlockSpec& b : conv_blocks) {
            if (b.filters == 0) throw ConfigError("architecture: conv block with 0 filters");
            if (b.kernel != 3 && b.kernel != 5 && b.kernel != 7)
                throw ConfigError("architecture: kernel size must be 3, 5, or 7, got " +
                                  std::to_string(b.kernel));
        }
        if (dense_units.empty()) throw ConfigError("architecture: no dense stages");
        if (dropout_rates.size() != dense_units.size())
            throw ConfigError("architecture: " + std::to_string(dropout_rates.size()) +
                              " dropout rates for " + std::to_string(dense_units.size()) +
                              " dense stages");
        for (double r : dropout_rates)
            if (r < 0.0 || r >= 1.0)
                throw ConfigError("architecture: dropout rate must lie in [0, 1), got " +
                                  std::to_string(r));
        if (num_classes < 2) throw ConfigError("architecture: need at least 2 classes");
        if (input_height == 0 || input_width == 0 || input_channels == 0)
            throw ConfigError("architecture: empty input shape");
        const std::size_t div = std::size_t(1) << conv_blocks.size();
        if (input_height % div || input_width % div)
            throw ConfigError("architecture: input " + std::to_string(input_height) + "x" +
                              std::to_string(input_width) + " not divisible by 2^" +
                              std::to_string(conv_blocks.size()) + " pooling stages");
    }

    std::size_t flatten_size() const {
        const std::size_t div = std::size_t(1) << conv_blocks.size();
        return (input_height / div) * (input_width / div) * conv_blocks.back().filters;
    }
};

// First maximum wins, so ties resolve to the lower class index.
template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& probs) {
    require_rank(probs, 2, "argmax");
    std::vector<std::size_t> out(probs.dim(0));
    for (std::size_t i = 0; i < probs.dim(0); ++i) {
        const T* row = probs.data() + i * probs.dim(1);
        std::size_t best = 0;
        for (std::size_t j = 1; j < probs.dim(1); ++j)
            if (row[j] > row[best]) best = j;
        out[i] = best;
    }
    return out;
}

template <typename T>
class Network {
public:
    // Emitted once per layer row during forward: layer name and output shape.
    using ShapeProbe = std::function<void(const std::string&, const Shape&)>;

    Network() = default;

    // He-uniform fan-in weights drawn from one seeded stream in declaration
    // order; biases 0, gamma 1, beta 0, running stats (0, 1).
    static Network build(const ArchitectureSpec& spec, std::uint64_t seed) {
        spec.validate();
        Network net;
        net.spec_ = spec;
        net.seed_ = seed;
        Rng rng(seed);

        std::size_t cin = spec.input_channels;
        for (const ConvBlockSpec& b : spec.conv_blocks) {
            ConvStage stage;
            stage.conv.weights = Tensor<T>({b.kernel, b.kernel, cin, b.filters});
            he_uniform(rng, stage.conv.weights, b.kernel * b.kernel * cin);
            stage.conv.bias = Tensor<T>({b.filters});
            stage.bn.gamma = Tensor<T>::full({b.filters}, T(1));
            stage.bn.beta = Tensor<T>({b.filters});
            stage.bn.running_mean = Tensor<T>({b.filters});
            stage.bn.running_var = Tensor<T>::full({b.filters}, T(1));
            net.conv_.push_back(std::move(stage));
            cin = b.filters;
        }

        std::size_t in = spec.flatten_size();
        for (std::size_t i = 0; i < spec.dense_units.size(); ++i) {
            DenseStage stage;
            stage.dense.weights = Tensor<T>({in, spec.dense_units[i]});
            he_uniform(rng, stage.dense.weights, in);
            stage.dense.bias = Tensor<T>({spec.dense_units[i]});
            stage.rate = spec.dropout_rates[i];
            net.dense_.push_back(std::move(stage));
            in = spec.dense_units[i];
        }

        net.output_.weights = Tensor<T>({in, spec.num_classes});
        he_uniform(rng, net.output_.weights, in);
        net.output_.bias = Tensor<T>({spec.num_classes});
        return net;
    }

    const ArchitectureSpec& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }

    void set_dropout_enabled(bool on) { dropout_enabled_ = on; }

    // Class probabilities, one row per sample. Train mode uses batch
    // statistics, advances running stats and the dropout step counter, and
    // caches activations for backward(). Infer mode leaves all state alone.
    Tensor<T> forward(const Tensor<T>& batch, Mode mode, const ShapeProbe* probe = nullptr) {
        check_input(batch);
        emit(probe, "input", batch.shape());
        const std::uint64_t step = mode == Mode::train ? dropout_step_++ : 0;

        Tensor<T> x = batch;
        for (std::size_t i = 0; i < conv_.size(); ++i) {
            ConvStage& s = conv_[i];
            const std::string tag = std::to_string(i + 1);
            if (mode == Mode::train) {
                s.in_shape = x.shape();
                s.cols = im2col_same(x, s.conv.weights.dim(0));
                x = conv2d_forward_cols(s.cols, s.in_shape, s.conv);
            } else {
                x = conv2d_forward(x, s.conv);
            }
            emit(probe, "conv" + tag, x.shape());
            x = batchnorm_forward(x, s.bn, mode, mode == Mode::train ? &s.bn_cache : nullptr);
            emit(probe, "bn" + tag, x.shape());
            if (mode == Mode::train) s.bn_out = x;
            x = relu(x);
            MaxPoolResult<T> mp = maxpool2d(x);
            if (mode == Mode::train) s.mp_argmax = std::move(mp.argmax);
            x = std::move(mp.output);
            emit(probe, "mp" + tag, x.shape());
        }

        flat_shape_ = x.shape();
        x = x.reshaped({x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)});
        emit(probe, "flatten", x.shape());

        for (std::size_t i = 0; i < dense_.size(); ++i) {
            DenseStage& s = dense_[i];
            const std::string tag = std::to_string(i + 1);
            if (mode == Mode::train) s.in = x;
            x = dense_forward(x, s.dense);
            if (mode == Mode::train) s.lin_out = x;
            x = relu(x);
            emit(probe, "dense" + tag, x.shape());
            const double rate = dropout_enabled_ ? s.rate : 0.0;
            DropoutResult<T> dr = dropout(x, rate, mode,
                                          derive_seed(seed_, "dropout/" + std::to_string(step) + "/" + tag));
            if (mode == Mode::train) s.mask = std::move(dr.mask);
            x = std::move(dr.output);
            emit(probe, "dropout" + tag, x.shape());
        }

        if (mode == Mode::train) output_in_ = x;
        x = dense_forward(x, output_);
        Tensor<T> probs = softmax(x);
        emit(probe, "output", probs.shape());
        return probs;
    }

    // Inference without touching any state; safe to call concurrently.
    Tensor<T> infer(const Tensor<T>& batch) const {
        check_input(batch);
        Tensor<T> x = batch;
        for (const ConvStage& s : conv_) {
            x = conv2d_forward(x, s.conv);
            x = batchnorm_infer(x, s.bn);
            x = relu(x);
            x = maxpool2d(x).output;
        }
        x = x.reshaped({x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)});
        for (const DenseStage& s : dense_) {
            x = dense_forward(x, s.dense);
            x = relu(x);
        }
        return softmax(dense_forward(x, output_));
    }

    std::vector<std::size_t> predict(const Tensor<T>& batch) const { return argmax_rows(infer(batch)); }

    // Gradients for all trainable tensors, aligned with trainable_parameters().
    // d_logits is the loss gradient at the final dense output, before softmax.
    // Valid only straight after a train-mode forward pass on the same batch.
    std::vector<Tensor<T>> backward(const Tensor<T>& d_logits) {
        if (output_in_.empty())
            throw ConfigError("backward: no cached train-mode forward pass");
        std::vector<Tensor<T>> grads(trainable_count());
        std::size_t gi = grads.size();

        DenseGrads<T> og = dense_backward(output_in_, output_, d_logits);
        grads[--gi] = std::move(og.bias);
        grads[--gi] = std::move(og.weights);
        Tensor<T> dx = std::move(og.input);

        for (std::size_t i = dense_.size(); i-- > 0;) {
            DenseStage& s = dense_[i];
            dx = dropout_backward(dx, s.mask);
            dx = relu_backward(s.lin_out, dx);
            DenseGrads<T> dg = dense_backward(s.in, s.dense, dx);
            grads[--gi] = std::move(dg.bias);
            grads[--gi] = std::move(dg.weights);
            dx = std::move(dg.input);
        }

        dx = dx.reshaped(flat_shape_);
        for (std::size_t i = conv_.size(); i-- > 0;) {
            ConvStage& s = conv_[i];
            dx = maxpool2d_backward(s.bn_out.shape(), s.mp_argmax, dx);
            dx = relu_backward(s.bn_out, dx);
            BatchNormGrads<T> bg = batchnorm_backward(s.bn_out, s.bn, dx, s.bn_cache);
            grads[--gi] = std::move(bg.beta);
            grads[--gi] = std::move(bg.gamma);
            dx = std::move(bg.input);
            Conv2dGrads<T> cg = conv2d_backward_cols(s.cols, s.in_shape, s.conv, dx);
            grads[--gi] = std::move(cg.bias);
            grads[--gi] = std::move(cg.weights);
            dx = std::move(cg.input);
        }
        return grads;
    }

    // Trainable tensors in declaration order: per conv block W, b, gamma,
    // beta; per dense stage W, b; output W, b. Running stats excluded.
    std::vector<Tensor<T>*> trainable_parameters() {
        std::vector<Tensor<T>*> out;
        for (ConvStage& s : conv_) {
            out.push_back(&s.conv.weights);
            out.push_back(&s.conv.bias);
            out.push_back(&s.bn.gamma);
            out.push_back(&s.bn.beta);
        }
        for (DenseStage& s : dense_) {
            out.push_back(&s.dense.weights);
            out.push_back(&s.dense.bias);
        }
        out.push_back(&output_.weights);
        out.push_back(&output_.bias);
        return out;
    }

    std::size_t trainable_count() const { return conv_.size() * 4 + dense_.size() * 2 + 2; }

    struct LayerBlob {
        std::string name;
        std::vector<Tensor<T>*> tensors;
    };

    // Persisted tensors grouped by layer, running statistics included.
    std::vector<LayerBlob> parameter_blobs() {
        std::vector<LayerBlob> out;
        for (std::size_t i = 0; i < conv_.size(); ++i) {
            ConvStage& s = conv_[i];
            out.push_back({"conv" + std::to_string(i + 1), {&s.conv.weights, &s.conv.bias}});
            out.push_back({"bn" + std::to_string(i + 1),
                           {&s.bn.gamma, &s.bn.beta, &s.bn.running_mean, &s.bn.running_var}});
        }
        for (std::size_t i = 0; i < dense_.size(); ++i)
            out.push_back({"dense" + std::to_string(i + 1),
                           {&dense_[i].dense.weights, &dense_[i].dense.bias}});
        out.push_back({"output", {&output_.weights, &output_.bias}});
        return out;
    }

    // Element counts per parameterized layer, in network order. Batch norm
    // layers count all four per-channel vectors.
    std::vector<std::size_t> parameter_counts() {
        std::vector<std::size_t> out;
        for (LayerBlob& blob : parameter_blobs()) {
            std::size_t n = 0;
            for (Tensor<T>* t : blob.tensors) n += t->size();
            out.push_back(n);
        }
        return out;
    }

    std::size_t parameter_total() {
        std::size_t n = 0;
        for (std::size_t c : parameter_counts()) n += c;
        return n;
    }

private:
    struct ConvStage {
        Conv2dParams<T> conv;
        BatchNormParams<T> bn;
        // train-mode caches
        Shape in_shape;
        Tensor<T> cols;
        BatchNormCache<T> bn_cache;
        Tensor<T> bn_out;
        std::vector<std::size_t> mp_argmax;
    };

    struct DenseStage {
        DenseParams<T> dense;
        double rate = 0.0;
        Tensor<T> in, lin_out, mask;
    };

    static void he_uniform(Rng& rng, Tensor<T>& w, std::size_t fan_in) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = static_cast<T>(rng.uniform(-limit, limit));
    }

    void check_input(const Tensor<T>& batch) const {
        require_rank(batch, 4, "network");
        if (batch.dim(1) != spec_.input_height || batch.dim(2) != spec_.input_width ||
            batch.dim(3) != spec_.input_channels)
            throw ShapeError("network: input " + shape_str(batch.shape()) + " does not match expected " +
                             std::to_string(spec_.input_height) + "x" + std::to_string(spec_.input_width) +
                             "x" + std::to_string(spec_.input_channels));
    }

    static void emit(const ShapeProbe* probe, const std::string& name, const Shape& shape) {
        if (probe && *probe) (*probe)(name, shape);
    }

    ArchitectureSpec spec_;
    std::uint64_t seed_ = 0;
    std::vector<ConvStage> conv_;
    std::vector<DenseStage> dense_;
    DenseParams<T> output_;
    Tensor<T> output_in_;
    Shape flat_shape_;
    std::uint64_t dropout_step_ = 0;
    bool dropout_enabled_ = true;
};

using NetworkF = Network<float>;
using NetworkD = Network<double>;

// ---------------------------------------------------------------------------
// Checkpoint persistence: text header then raw float32 little-endian payload,
// blobs in parameter_blobs() order. Byte-stable across save/load/save.
// ---------------------------------------------------------------------------

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    std::string config_hash;
};

void save_checkpoint(NetworkF& net, const CheckpointMeta& meta, const std::string& path);

struct Checkpoint {
    NetworkF net;
    CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace ildnet
