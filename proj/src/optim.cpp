#include "ildnet/optim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ildnet/rng.hpp"

namespace ildnet {

namespace {

// Copies the selected samples into a contiguous batch tensor.
TensorF gather(const TensorF& x, const std::vector<std::size_t>& order, std::size_t start,
               std::size_t count) {
    const std::size_t sample = x.size() / x.dim(0);
    TensorF out({count, x.dim(1), x.dim(2), x.dim(3)});
    for (std::size_t i = 0; i < count; ++i) {
        const float* src = x.data() + order[start + i] * sample;
        float* dst = out.data() + i * sample;
        for (std::size_t j = 0; j < sample; ++j) dst[j] = src[j];
    }
    return out;
}

double batch_loss(const TensorF& probs, const TensorF& targets, LossKind loss) {
    return loss == LossKind::cross_entropy ? double(cross_entropy(probs, targets))
                                           : double(mse_loss(probs, targets));
}

TensorF loss_logit_grad(const TensorF& probs, const TensorF& targets, LossKind loss) {
    if (loss == LossKind::cross_entropy) {
        TensorF d(probs.shape());
        const float inv_n = 1.0f / static_cast<float>(probs.dim(0));
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = (probs[i] - targets[i]) * inv_n;
        return d;
    }
    TensorF d_probs(probs.shape());
    const float scale = 2.0f / static_cast<float>(probs.size());
    for (std::size_t i = 0; i < d_probs.size(); ++i) d_probs[i] = scale * (probs[i] - targets[i]);
    return softmax_backward(probs, d_probs);
}

std::size_t count_correct(const TensorF& probs, const std::vector<std::size_t>& y,
                          const std::vector<std::size_t>& order, std::size_t start) {
    const std::vector<std::size_t> pred = argmax_rows(probs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == y[order[start + i]]) ++correct;
    return correct;
}

}  // namespace

std::vector<EpochRecord> fit(NetworkF& net, const Dataset& train, const Dataset* val,
                             const TrainingConfig& cfg) {
    cfg.validate();
    if (train.x.empty() || train.x.dim(0) != train.y.size())
        throw DataError("fit: training set has " + std::to_string(train.x.empty() ? 0 : train.x.dim(0)) +
                        " samples and " + std::to_string(train.y.size()) + " labels");
    const std::size_t k = net.spec().num_classes;
    for (std::size_t label : train.y)
        if (label >= k)
            throw DataError("fit: label " + std::to_string(label) + " outside " + std::to_string(k) +
                            " classes");

    // Index sets for the train portion and the (supplied or carved) val set.
    std::vector<std::size_t> train_idx;
    Dataset carved;
    const Dataset* val_set = val;
    if (val_set == nullptr && cfg.validation_fraction > 0.0) {
        Rng rng(derive_seed(cfg.seed, "valsplit"));
        std::vector<std::vector<std::size_t>> by_class(k);
        for (std::size_t i = 0; i < train.y.size(); ++i) by_class[train.y[i]].push_back(i);
        std::vector<std::size_t> val_idx;
        for (std::size_t c = 0; c < k; ++c) {
            rng.shuffle(by_class[c]);
            const std::size_t take = static_cast<std::size_t>(
                cfg.validation_fraction * static_cast<double>(by_class[c].size()));
            for (std::size_t i = 0; i < by_class[c].size(); ++i)
                (i < take ? val_idx : train_idx).push_back(by_class[c][i]);
        }
        if (!val_idx.empty()) {
            carved.x = gather(train.x, val_idx, 0, val_idx.size());
            for (std::size_t i : val_idx) carved.y.push_back(train.y[i]);
            val_set = &carved;
        }
    } else {
        train_idx.resize(train.y.size());
        for (std::size_t i = 0; i < train_idx.size(); ++i) train_idx[i] = i;
    }

    std::vector<TensorF*> params = net.trainable_parameters();
    AdamState<float> adam(params, cfg.beta1, cfg.beta2, cfg.epsilon);
    const float lr = static_cast<float>(cfg.learning_rate);

    std::vector<EpochRecord> records;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "shuffle/" + std::to_string(epoch)));
        rng.shuffle(train_idx);

        double loss_sum = 0.0;
        std::size_t seen = 0, correct = 0;
        for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
            const std::size_t bsize = std::min(cfg.batch_size, train_idx.size() - start);
            if (bsize < 2) continue;  // a lone trailing sample would break batch norm
            TensorF bx = gather(train.x, train_idx, start, bsize);
            std::vector<std::size_t> by(bsize);
            for (std::size_t i = 0; i < bsize; ++i) by[i] = train.y[train_idx[start + i]];
            TensorF targets = one_hot<float>(by, k);

            TensorF probs = net.forward(bx, Mode::train);
            const double loss = batch_loss(probs, targets, cfg.loss);
            if (!std::isfinite(loss))
                throw NumericError("fit: loss diverged at epoch " + std::to_string(epoch) +
                                   ", sample offset " + std::to_string(start));
            loss_sum += loss * static_cast<double>(bsize);
            correct += count_correct(probs, train.y, train_idx, start);
            seen += bsize;

            std::vector<TensorF> grads = net.backward(loss_logit_grad(probs, targets, cfg.loss));
            adam.step(params, grads, lr);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        rec.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
        if (val_set && !val_set->x.empty()) {
            const auto [vl, va] = evaluate_loss(net, *val_set, cfg.loss, cfg.batch_size);
            rec.val_loss = vl;
            rec.val_accuracy = va;
        }
        records.push_back(rec);
    }
    return records;
}

std::pair<double, double> evaluate_loss(NetworkF& net, const Dataset& data, LossKind loss,
                                        std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("evaluate: batch size must be positive");
    if (data.x.empty() || data.x.dim(0) != data.y.size())
        throw DataError("evaluate: dataset has " + std::to_string(data.x.empty() ? 0 : data.x.dim(0)) +
                        " samples and " + std::to_string(data.y.size()) + " labels");
    const std::size_t n = data.x.dim(0);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t bsize = std::min(batch_size, n - start);
        TensorF bx = gather(data.x, order, start, bsize);
        std::vector<std::size_t> by(data.y.begin() + start, data.y.begin() + start + bsize);
        TensorF probs = net.infer(bx);
        loss_sum += batch_loss(probs, one_hot<float>(by, probs.dim(1)), loss) * static_cast<double>(bsize);
        correct += count_correct(probs, data.y, order, start);
    }
    return {loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

std::vector<std::size_t> predict_labels(const NetworkF& net, const TensorF& x, std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("predict: batch size must be positive");
    const std::size_t n = x.dim(0);
    std::vector<std::size_t> order(n), out;
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    out.reserve(n);
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t bsize = std::min(batch_size, n - start);
        for (std::size_t p : net.predict(gather(x, order, start, bsize))) out.push_back(p);
    }
    return out;
}

void write_curves_csv(const std::string& path, const std::vector<EpochRecord>& records) {
    std::ofstream out(path);
    if (!out) throw DataError("curves: cannot open " + path + " for writing");
    out << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
    char buf[64];
    const auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.9g", v);
        return std::string(buf);
    };
    for (const EpochRecord& r : records) {
        out << r.epoch << ',' << num(r.train_loss) << ',' << num(r.train_accuracy) << ',';
        if (r.val_loss) out << num(*r.val_loss);
        out << ',';
        if (r.val_accuracy) out << num(*r.val_accuracy);
        out << '\n';
    }
    if (!out) throw DataError("curves: failed writing " + path);
}

}  // namespace ildnet
