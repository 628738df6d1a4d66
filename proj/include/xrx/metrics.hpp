#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrx/errors.hpp"
#include "xrx/util.hpp"

namespace xrx {

// K x K counts, rows = true class, cols = predicted class.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::size_t> counts;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t k) : classes(k), counts(k * k, 0) {}

    std::size_t& at(std::size_t t, std::size_t p) { return counts[t * classes + p]; }
    std::size_t at(std::size_t t, std::size_t p) const { return counts[t * classes + p]; }

    std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), 0UL); }
    std::size_t row_total(std::size_t t) const {
        std::size_t s = 0;
        for (std::size_t p = 0; p < classes; ++p) s += at(t, p);
        return s;
    }
    std::size_t col_total(std::size_t p) const {
        std::size_t s = 0;
        for (std::size_t t = 0; t < classes; ++t) s += at(t, p);
        return s;
    }
};

inline ConfusionMatrix confusion(const std::vector<std::size_t>& preds,
                                 const std::vector<std::size_t>& labels, std::size_t k) {
    if (preds.size() != labels.size())
        throw LengthMismatch("confusion: predictions and labels differ in length");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= k || labels[i] >= k)
            throw IdOutOfRange("confusion: class id >= K at sample " + std::to_string(i));
        ++cm.at(labels[i], preds[i]);
    }
    return cm;
}

// Per-class precision/recall/F1. Zero denominators yield 0 with the
// corresponding `undefined` flag set, keeping macro averages total.
struct PrfResult {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    bool precision_undefined = false, recall_undefined = false, f1_undefined = false;
};

inline PrfResult precision_recall_f1(const ConfusionMatrix& cm, std::size_t cls) {
    if (cls >= cm.classes) throw IdOutOfRange("precision_recall_f1: class id >= K");
    const double tp = static_cast<double>(cm.at(cls, cls));
    const double col = static_cast<double>(cm.col_total(cls));
    const double row = static_cast<double>(cm.row_total(cls));
    PrfResult r;
    if (col > 0.0)
        r.precision = tp / col;
    else
        r.precision_undefined = true;
    if (row > 0.0)
        r.recall = tp / row;
    else
        r.recall_undefined = true;
    if (r.precision + r.recall > 0.0)
        r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    else
        r.f1_undefined = true;
    return r;
}

inline double f1_score(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

// Row-normalized diagonal: correct-in-class / class-total. A recall-style
// rate that some clinical reports label PPV; kept separate from the standard
// precision-style definition so reports can carry both.
inline double paper_ppv(const ConfusionMatrix& cm, std::size_t cls) {
    if (cls >= cm.classes) throw IdOutOfRange("paper_ppv: class id >= K");
    const std::size_t row = cm.row_total(cls);
    if (row == 0) throw EmptyClassRow("paper_ppv: class row is empty");
    return static_cast<double>(cm.at(cls, cls)) / static_cast<double>(row);
}

// ---------------------------------------------------------------------------
// ROC / AUC (one-vs-rest)

struct RocCurve {
    std::vector<double> fpr, tpr;  // monotone from (0,0) to (1,1)
    double auc = 0.0;
};

// Threshold sweep over the distinct scores, ties stepped simultaneously,
// AUC by the trapezoid rule.
inline RocCurve roc_auc_ovr(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw LengthMismatch("roc_auc_ovr: scores and labels differ in length");
    std::size_t pos = 0, neg = 0;
    for (int l : labels) (l ? pos : neg) += 1;
    if (pos == 0 || neg == 0)
        throw SingleClassOnly("roc_auc_ovr: needs at least one positive and one negative");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    RocCurve out;
    out.fpr.push_back(0.0);
    out.tpr.push_back(0.0);
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    double auc = 0.0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            if (labels[order[i]])
                ++tp;
            else
                ++fp;
            ++i;
        }
        const double x = static_cast<double>(fp) / static_cast<double>(neg);
        const double y = static_cast<double>(tp) / static_cast<double>(pos);
        auc += (x - out.fpr.back()) * (y + out.tpr.back()) / 2.0;
        out.fpr.push_back(x);
        out.tpr.push_back(y);
    }
    out.auc = auc;
    return out;
}

// ---------------------------------------------------------------------------
// data splits

// Stratified k-fold: per class, seeded shuffle then round-robin dealing, so
// per-class fold sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> kfold_split(const std::vector<std::size_t>& labels,
                                                         std::size_t k, std::uint64_t seed) {
    if (k < 2) throw InvalidConfig("kfold_split: k must be >= 2");
    std::size_t num_classes = 0;
    for (std::size_t l : labels) num_classes = std::max(num_classes, l + 1);
    std::vector<std::vector<std::size_t>> per_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) per_class[labels[i]].push_back(i);
    for (std::size_t c = 0; c < num_classes; ++c)
        if (per_class[c].size() < k)
            throw ClassTooSmall("kfold_split: class " + std::to_string(c) + " has " +
                                std::to_string(per_class[c].size()) + " < k samples");
    std::vector<std::vector<std::size_t>> folds(k);
    Rng rng(derive_seed(seed, 0xF01D));
    for (auto& idx : per_class) {
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i) folds[i % k].push_back(idx[i]);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

// Stratified two-way split (e.g. 80/20); the second return holds the test part.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_test_split(
    const std::vector<std::size_t>& labels, double test_frac, std::uint64_t seed) {
    if (test_frac <= 0.0 || test_frac >= 1.0)
        throw InvalidConfig("train_test_split: fraction must be in (0,1)");
    std::size_t num_classes = 0;
    for (std::size_t l : labels) num_classes = std::max(num_classes, l + 1);
    std::vector<std::vector<std::size_t>> per_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) per_class[labels[i]].push_back(i);
    Rng rng(derive_seed(seed, 0x8020));
    std::vector<std::size_t> train, test;
    for (auto& idx : per_class) {
        if (idx.empty()) continue;
        rng.shuffle(idx);
        std::size_t take = static_cast<std::size_t>(
            std::floor(test_frac * static_cast<double>(idx.size()) + 0.5));
        if (take >= idx.size()) take = idx.size() - 1;
        for (std::size_t i = 0; i < idx.size(); ++i) (i < take ? test : train).push_back(idx[i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

// ---------------------------------------------------------------------------
// report assembly

struct ClassMetrics {
    std::string name;
    PrfResult prf;
    double ppv = 0.0;  // the row-normalized variant above
};

struct MetricsReport {
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double accuracy = 0.0;
    ConfusionMatrix cm;
};

inline MetricsReport metrics_report(const ConfusionMatrix& cm,
                                    const std::vector<std::string>& class_names = {}) {
    MetricsReport r;
    r.cm = cm;
    const std::size_t K = cm.classes;
    double sp = 0.0, sr = 0.0, sf = 0.0;
    std::size_t diag = 0;
    for (std::size_t c = 0; c < K; ++c) {
        ClassMetrics m;
        m.name = c < class_names.size() ? class_names[c] : "class-" + std::to_string(c);
        m.prf = precision_recall_f1(cm, c);
        m.ppv = cm.row_total(c) > 0 ? paper_ppv(cm, c) : 0.0;
        sp += m.prf.precision;
        sr += m.prf.recall;
        sf += m.prf.f1;
        diag += cm.at(c, c);
        r.per_class.push_back(std::move(m));
    }
    r.macro_precision = sp / static_cast<double>(K);
    r.macro_recall = sr / static_cast<double>(K);
    r.macro_f1 = sf / static_cast<double>(K);
    r.accuracy = cm.total() > 0
                     ? static_cast<double>(diag) / static_cast<double>(cm.total())
                     : 0.0;
    return r;
}

// fixed-width text table over the report
inline std::string metrics_table(const MetricsReport& r) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "class" << std::right << std::setw(10) << "precision"
       << std::setw(10) << "recall" << std::setw(10) << "f1" << std::setw(10) << "ppv" << "\n";
    os << std::string(56, '-') << "\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& c : r.per_class)
        os << std::left << std::setw(16) << c.name << std::right << std::setw(10)
           << c.prf.precision << std::setw(10) << c.prf.recall << std::setw(10) << c.prf.f1
           << std::setw(10) << c.ppv << "\n";
    os << std::string(56, '-') << "\n";
    os << std::left << std::setw(16) << "macro" << std::right << std::setw(10) << r.macro_precision
       << std::setw(10) << r.macro_recall << std::setw(10) << r.macro_f1 << std::setw(10) << ""
       << "\n";
    os << "accuracy: " << r.accuracy << "\n";
    return os.str();
}

inline nlohmann::json metrics_json(const MetricsReport& r) {
    nlohmann::json j;
    j["accuracy"] = r.accuracy;
    j["macro"] = {{"precision", r.macro_precision},
                  {"recall", r.macro_recall},
                  {"f1", r.macro_f1}};
    j["classes"] = nlohmann::json::array();
    for (const auto& c : r.per_class)
        j["classes"].push_back(nlohmann::json{{"name", c.name},
                                              {"precision", c.prf.precision},
                                              {"recall", c.prf.recall},
                                              {"f1", c.prf.f1},
                                              {"ppv", c.ppv}});
    j["confusion"] = nlohmann::json::array();
    for (std::size_t t = 0; t < r.cm.classes; ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t p = 0; p < r.cm.classes; ++p) row.push_back(r.cm.at(t, p));
        j["confusion"].push_back(row);
    }
    return j;
}

inline std::string roc_csv(const RocCurve& roc) {
    std::ostringstream os;
    os << "fpr,tpr\n";
    for (std::size_t i = 0; i < roc.fpr.size(); ++i) os << roc.fpr[i] << ',' << roc.tpr[i] << '\n';
    return os.str();
}

}  // namespace xrx
