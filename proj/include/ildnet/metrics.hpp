#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ildnet/errors.hpp"

namespace ildnet {

// K x K count matrix, rows indexed by true class, columns by predicted class.
struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<long long> counts;          // row-major
    std::vector<std::string> class_names;   // size k when set

    long long at(std::size_t truth, std::size_t pred) const { return counts[truth * k + pred]; }
    long long& at(std::size_t truth, std::size_t pred) { return counts[truth * k + pred]; }

    long long total() const {
        long long n = 0;
        for (long long c : counts) n += c;
        return n;
    }

    long long trace() const {
        long long n = 0;
        for (std::size_t i = 0; i < k; ++i) n += at(i, i);
        return n;
    }

    std::string name_of(std::size_t c) const {
        return class_names.size() == k ? class_names[c] : "class" + std::to_string(c);
    }
};

ConfusionMatrix confusion(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred,
                          std::size_t k, std::vector<std::string> class_names = {});

// One-vs-rest counts and derived scores for a single class. A ratio whose
// denominator is zero is reported as 0 with its degenerate flag set.
struct ClassMetrics {
    long long tp = 0, tn = 0, fp = 0, fn = 0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool accuracy_degenerate = false;
    bool precision_degenerate = false;
    bool recall_degenerate = false;
    bool f1_degenerate = false;
};

std::vector<ClassMetrics> class_metrics(const ConfusionMatrix& cm);

// Unweighted mean of per-class F1 scores.
double f_avg(const std::vector<ClassMetrics>& per_class);

// trace/total over the whole matrix.
double micro_accuracy(const ConfusionMatrix& cm);

// Cross-validation aggregate: element-wise pooled matrix plus both summary
// conventions (metrics of the pooled matrix, and per-fold means).
struct FoldAggregate {
    ConfusionMatrix pooled;
    std::vector<std::vector<ClassMetrics>> per_fold;
    std::vector<ClassMetrics> pooled_metrics;
    double pooled_accuracy = 0.0;
    double pooled_f_avg = 0.0;
    double mean_accuracy = 0.0;  // mean of per-fold micro accuracies
    double mean_f_avg = 0.0;     // mean of per-fold F averages
};

FoldAggregate aggregate_folds(const std::vector<ConfusionMatrix>& folds);

// Human-readable evaluation report: confusion matrix, per-class table,
// overall accuracy and F average. Degenerate ratios are marked with '*'.
std::string render_report(const ConfusionMatrix& cm);

// The same content as machine-readable JSON text.
std::string report_json(const ConfusionMatrix& cm);

}  // namespace ildnet
