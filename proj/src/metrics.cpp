#include "ildnet/metrics.hpp"

#include <cstdio>
#include <utility>

#include <json.hpp>

namespace ildnet {

ConfusionMatrix confusion(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred,
                          std::size_t k, std::vector<std::string> class_names) {
    if (k == 0) throw ConfigError("confusion: need at least one class");
    if (truth.size() != pred.size())
        throw ShapeError("confusion: " + std::to_string(truth.size()) + " true labels vs " +
                         std::to_string(pred.size()) + " predictions");
    if (!class_names.empty() && class_names.size() != k)
        throw ConfigError("confusion: " + std::to_string(class_names.size()) + " names for " +
                          std::to_string(k) + " classes");
    ConfusionMatrix cm;
    cm.k = k;
    cm.counts.assign(k * k, 0);
    cm.class_names = std::move(class_names);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= k || pred[i] >= k)
            throw DataError("confusion: label pair (" + std::to_string(truth[i]) + ", " +
                            std::to_string(pred[i]) + ") outside " + std::to_string(k) + " classes");
        ++cm.at(truth[i], pred[i]);
    }
    return cm;
}

std::vector<ClassMetrics> class_metrics(const ConfusionMatrix& cm) {
    const long long total = cm.total();
    std::vector<ClassMetrics> out(cm.k);
    for (std::size_t c = 0; c < cm.k; ++c) {
        ClassMetrics& m = out[c];
        m.tp = cm.at(c, c);
        for (std::size_t p = 0; p < cm.k; ++p)
            if (p != c) m.fn += cm.at(c, p);
        for (std::size_t t = 0; t < cm.k; ++t)
            if (t != c) m.fp += cm.at(t, c);
        m.tn = total - m.tp - m.fp - m.fn;

        if (total > 0)
            m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(total);
        else
            m.accuracy_degenerate = true;
        if (m.tp + m.fp > 0)
            m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
        else
            m.precision_degenerate = true;
        if (m.tp + m.fn > 0)
            m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
        else
            m.recall_degenerate = true;
        if (m.precision + m.recall > 0.0)
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        else
            m.f1_degenerate = true;
    }
    return out;
}

double f_avg(const std::vector<ClassMetrics>& per_class) {
    if (per_class.empty()) throw ConfigError("f_avg: no classes");
    double sum = 0.0;
    for (const ClassMetrics& m : per_class) sum += m.f1;
    return sum / static_cast<double>(per_class.size());
}

double micro_accuracy(const ConfusionMatrix& cm) {
    const long long total = cm.total();
    if (total == 0) throw DataError("accuracy: empty confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

FoldAggregate aggregate_folds(const std::vector<ConfusionMatrix>& folds) {
    if (folds.empty()) throw ConfigError("aggregate: no folds");
    FoldAggregate agg;
    agg.pooled = folds[0];
    for (std::size_t f = 1; f < folds.size(); ++f) {
        if (folds[f].k != agg.pooled.k)
            throw ShapeError("aggregate: fold " + std::to_string(f) + " has " +
                             std::to_string(folds[f].k) + " classes, expected " +
                             std::to_string(agg.pooled.k));
        for (std::size_t i = 0; i < folds[f].counts.size(); ++i)
            agg.pooled.counts[i] += folds[f].counts[i];
    }
    for (const ConfusionMatrix& cm : folds) {
        agg.per_fold.push_back(class_metrics(cm));
        agg.mean_accuracy += micro_accuracy(cm);
        agg.mean_f_avg += f_avg(agg.per_fold.back());
    }
    agg.mean_accuracy /= static_cast<double>(folds.size());
    agg.mean_f_avg /= static_cast<double>(folds.size());
    agg.pooled_metrics = class_metrics(agg.pooled);
    agg.pooled_accuracy = micro_accuracy(agg.pooled);
    agg.pooled_f_avg = f_avg(agg.pooled_metrics);
    return agg;
}

namespace {

std::string pct(double v, bool degenerate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%7.4f%s", v * 100.0, degenerate ? "*" : " ");
    return buf;
}

}  // namespace

std::string render_report(const ConfusionMatrix& cm) {
    const std::vector<ClassMetrics> per_class = class_metrics(cm);
    std::string out = "confusion matrix (rows: true, columns: predicted)\n";
    char buf[64];

    std::snprintf(buf, sizeof buf, "%8s", "");
    out += buf;
    for (std::size_t p = 0; p < cm.k; ++p) {
        std::snprintf(buf, sizeof buf, " %7s", cm.name_of(p).c_str());
        out += buf;
    }
    out += '\n';
    for (std::size_t t = 0; t < cm.k; ++t) {
        std::snprintf(buf, sizeof buf, "%8s", cm.name_of(t).c_str());
        out += buf;
        for (std::size_t p = 0; p < cm.k; ++p) {
            std::snprintf(buf, sizeof buf, " %7lld", cm.at(t, p));
            out += buf;
        }
        out += '\n';
    }

    out += "\nper-class metrics (%, * marks a 0/0 ratio reported as 0)\n";
    std::snprintf(buf, sizeof buf, "%8s %8s %9s %8s %8s\n", "", "accuracy", "precision", "recall", "f1");
    out += buf;
    for (std::size_t c = 0; c < cm.k; ++c) {
        const ClassMetrics& m = per_class[c];
        std::snprintf(buf, sizeof buf, "%8s ", cm.name_of(c).c_str());
        out += buf;
        out += pct(m.accuracy, m.accuracy_degenerate) + " ";
        out += pct(m.precision, m.precision_degenerate) + "  ";
        out += pct(m.recall, m.recall_degenerate) + " ";
        out += pct(m.f1, m.f1_degenerate) + "\n";
    }

    std::snprintf(buf, sizeof buf, "\noverall accuracy: %.4f%%\n", micro_accuracy(cm) * 100.0);
    out += buf;
    std::snprintf(buf, sizeof buf, "f average: %.4f%%\n", f_avg(per_class) * 100.0);
    out += buf;
    return out;
}

std::string report_json(const ConfusionMatrix& cm) {
    const std::vector<ClassMetrics> per_class = class_metrics(cm);
    nlohmann::ordered_json j;
    j["classes"] = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < cm.k; ++c) j["classes"].push_back(cm.name_of(c));
    j["confusion_matrix"] = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < cm.k; ++t) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::size_t p = 0; p < cm.k; ++p) row.push_back(cm.at(t, p));
        j["confusion_matrix"].push_back(row);
    }
    j["per_class"] = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < cm.k; ++c) {
        const ClassMetrics& m = per_class[c];
        nlohmann::ordered_json e;
        e["class"] = cm.name_of(c);
        e["tp"] = m.tp;
        e["tn"] = m.tn;
        e["fp"] = m.fp;
        e["fn"] = m.fn;
        e["accuracy"] = m.accuracy;
        e["precision"] = m.precision;
        e["recall"] = m.recall;
        e["f1"] = m.f1;
        e["degenerate"] = m.accuracy_degenerate || m.precision_degenerate || m.recall_degenerate ||
                          m.f1_degenerate;
        j["per_class"].push_back(e);
    }
    j["accuracy"] = micro_accuracy(cm);
    j["f_avg"] = f_avg(per_class);
    return j.dump(2) + "\n";
}

}  // namespace ildnet
