#pragma once

// Document classification: tf-idf weighted mean word vectors fed to one-vs-rest
// L2-regularized logistic regression.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "store.hpp"

namespace wordbench {

/// Smoothed idf: ln((1 + N) / (1 + df)) + 1. Unseen words have df = 0.
class TfidfModel {
public:
    TfidfModel() = default;

    explicit TfidfModel(std::span<const Document> train_docs) {
        if (train_docs.empty()) throw ArgumentError("tf-idf needs at least one training document");
        documents_ = train_docs.size();
        for (const auto& d : train_docs) {
            std::set<std::string> distinct(d.tokens.begin(), d.tokens.end());
            for (const auto& w : distinct) ++df_[w];
        }
    }

    double idf(const std::string& word) const {
        auto it = df_.find(word);
        const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
        return std::log((1.0 + static_cast<double>(documents_)) / (1.0 + df)) + 1.0;
    }

    std::size_t document_frequency(const std::string& word) const {
        auto it = df_.find(word);
        return it == df_.end() ? 0 : it->second;
    }

    std::size_t documents() const noexcept { return documents_; }

private:
    std::unordered_map<std::string, std::size_t> df_;
    std::size_t documents_ = 0;
};

inline TfidfModel fit_tfidf(std::span<const Document> train_docs) { return TfidfModel(train_docs); }

struct DocVector {
    std::vector<double> values;
    bool empty_features = false; ///< no token had a vector
};

/// sum_w count(w) idf(w) v_w / sum_w count(w) idf(w) over tokens with a vector.
inline DocVector doc_vector(const Document& doc, const TfidfModel& tfidf, const EmbeddingStore& store) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : doc.tokens) ++counts[t];
    DocVector out;
    out.values.assign(store.dim(), 0.0);
    double total = 0.0;
    for (const auto& [w, c] : counts) {
        auto v = store.vector(w);
        if (!v) continue;
        const double weight = static_cast<double>(c) * tfidf.idf(w);
        for (std::size_t d = 0; d < store.dim(); ++d) out.values[d] += weight * (*v)[d];
        total += weight;
    }
    if (total == 0.0) {
        out.empty_features = true;
        return out;
    }
    for (auto& x : out.values) x /= total;
    return out;
}

// ---------------------------------------------------------------------------
// Logistic regression

struct LogRegOptions {
    double C = 1.0;
    double tolerance = 1e-4;
    int max_iters = 1000;
};

/// Parameters of one binary problem: weights followed by the bias.
struct BinaryProblem {
    std::span<const std::vector<double>> features;
    std::span<const int> targets; ///< +1 / -1
    double C = 1.0;

    std::size_t dim() const { return features.empty() ? 0 : features.front().size(); }

    /// 0.5 |w|^2 + C sum log(1 + exp(-y (w.x + b))); the bias is unregularized.
    double objective(std::span<const double> params) const {
        const std::size_t n = dim();
        double reg = 0.0;
        for (std::size_t d = 0; d < n; ++d) reg += params[d] * params[d];
        double loss = 0.0;
        for (std::size_t i = 0; i < features.size(); ++i) {
            const double m = targets[i] * margin(params, features[i]);
            loss += std::log1p(std::exp(-std::abs(m))) + std::max(-m, 0.0);
        }
        return 0.5 * reg + C * loss;
    }

    void gradient(std::span<const double> params, std::span<double> grad) const {
        const std::size_t n = dim();
        for (std::size_t d = 0; d < n; ++d) grad[d] = params[d];
        grad[n] = 0.0;
        for (std::size_t i = 0; i < features.size(); ++i) {
            const double y = targets[i];
            const double m = y * margin(params, features[i]);
            // d/dm log(1 + e^-m) = -sigma(-m)
            const double s = m >= 0 ? std::exp(-m) / (1.0 + std::exp(-m)) : 1.0 / (1.0 + std::exp(m));
            const double coef = -C * y * s;
            for (std::size_t d = 0; d < n; ++d) grad[d] += coef * features[i][d];
            grad[n] += coef;
        }
    }

    static double margin(std::span<const double> params, const std::vector<double>& x) {
        double s = params[x.size()];
        for (std::size_t d = 0; d < x.size(); ++d) s += params[d] * x[d];
        return s;
    }
};

/// Full-batch gradient descent with Armijo backtracking. Returns weights+bias;
/// `trace`, when given, receives the objective after every accepted step.
inline std::vector<double> fit_binary(const BinaryProblem& problem, const LogRegOptions& opts,
                                      std::vector<double>* trace = nullptr) {
    const std::size_t n = problem.dim() + 1;
    std::vector<double> params(n, 0.0), grad(n), trial(n);
    double f = problem.objective(params);
    if (trace) trace->assign(1, f);
    double step = 1.0;
    for (int iter = 0; iter < opts.max_iters; ++iter) {
        problem.gradient(params, grad);
        double gnorm2 = 0.0;
        for (double g : grad) gnorm2 += g * g;
        if (std::sqrt(gnorm2) < opts.tolerance) break;
        step = std::min(1.0, step * 2.0);
        double f_trial = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t k = 0; k < n; ++k) trial[k] = params[k] - step * grad[k];
            f_trial = problem.objective(trial);
            if (f_trial <= f - 1e-4 * step * gnorm2) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        params.swap(trial);
        f = f_trial;
        if (trace) trace->push_back(f);
    }
    return params;
}

class LogRegModel {
public:
    LogRegModel() = default;
    LogRegModel(std::vector<std::string> classes, std::vector<std::vector<double>> weights, std::vector<double> bias)
        : classes_(std::move(classes)), weights_(std::move(weights)), bias_(std::move(bias)) {
        if (classes_.size() < 2) throw ArgumentError("a classifier needs at least two classes");
        if (weights_.size() != classes_.size() || bias_.size() != classes_.size())
            throw ArgumentError("one weight vector and bias per class required");
    }

    const std::vector<std::string>& classes() const noexcept { return classes_; }
    const std::vector<double>& weights(std::size_t c) const { return weights_.at(c); }
    double bias(std::size_t c) const { return bias_.at(c); }
    std::size_t dim() const { return weights_.empty() ? 0 : weights_.front().size(); }

    std::vector<double> scores(std::span<const double> x) const {
        if (x.size() != dim()) throw ArgumentError("feature dimension mismatch");
        std::vector<double> s(classes_.size());
        for (std::size_t c = 0; c < classes_.size(); ++c) s[c] = bias_[c] + dot(weights_[c], x);
        return s;
    }

    /// Per-class sigmoid of the linear score.
    std::vector<double> probabilities(std::span<const double> x) const {
        auto s = scores(x);
        for (auto& v : s) v = 1.0 / (1.0 + std::exp(-v));
        return s;
    }

    /// Highest linear score; ties go to the earliest class.
    const std::string& predict(std::span<const double> x) const {
        auto s = scores(x);
        return classes_[static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin())];
    }

private:
    std::vector<std::string> classes_;
    std::vector<std::vector<double>> weights_;
    std::vector<double> bias_;
};

/// One binary problem per class (classes sorted), each solved independently.
inline LogRegModel train_ovr_logreg(std::span<const std::vector<double>> features, std::span<const std::string> labels,
                                    const LogRegOptions& opts = {}) {
    if (features.size() != labels.size()) throw ArgumentError("features and labels differ in length");
    if (features.empty()) throw ArgumentError("no training examples");
    const std::size_t dim = features.front().size();
    for (const auto& x : features) {
        if (x.size() != dim) throw ArgumentError("inconsistent feature dimensions");
        for (double v : x)
            if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }
    const std::set<std::string> uniq(labels.begin(), labels.end());
    std::vector<std::string> classes(uniq.begin(), uniq.end());
    if (classes.size() < 2) throw ArgumentError("training data has a single class");
    std::vector<std::vector<double>> weights;
    std::vector<double> bias;
    std::vector<int> targets(labels.size());
    for (const auto& cls : classes) {
        for (std::size_t i = 0; i < labels.size(); ++i) targets[i] = labels[i] == cls ? 1 : -1;
        BinaryProblem problem{features, targets, opts.C};
        auto params = fit_binary(problem, opts);
        bias.push_back(params.back());
        params.pop_back();
        weights.push_back(std::move(params));
    }
    return LogRegModel(std::move(classes), std::move(weights), std::move(bias));
}

inline const std::string& predict(const LogRegModel& model, std::span<const double> x) { return model.predict(x); }

// ---------------------------------------------------------------------------
// Metrics

struct ClassMetrics {
    std::string label;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    std::size_t support = 0;
};

struct ClassificationReport {
    double accuracy = 0.0;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    std::vector<ClassMetrics> per_class;
    std::vector<std::string> labels;               ///< confusion axes (gold and predicted labels, sorted)
    std::vector<std::vector<std::size_t>> confusion; ///< [gold][predicted]
    nlohmann::json config = nlohmann::json::object();

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["accuracy"] = accuracy;
        j["macro"] = {{"precision", macro_precision}, {"recall", macro_recall}, {"f1", macro_f1}};
        auto& pc = j["per_class"] = nlohmann::json::array();
        for (const auto& m : per_class)
            pc.push_back({{"label", m.label}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
                          {"support", m.support}});
        j["labels"] = labels;
        j["confusion"] = confusion;
        j["config"] = config;
        return j;
    }

    std::string to_table() const {
        std::string out;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%10s %10s %10s %10s\n", "Accuracy", "Precision", "Recall", "F1");
        out += buf;
        std::snprintf(buf, sizeof buf, "%10.2f %10.2f %10.2f %10.2f\n", accuracy * 100, macro_precision * 100,
                      macro_recall * 100, macro_f1 * 100);
        out += buf;
        out += "\n";
        std::snprintf(buf, sizeof buf, "%-20s %10s %10s %10s %8s\n", "class", "precision", "recall", "f1", "support");
        out += buf;
        for (const auto& m : per_class) {
            std::snprintf(buf, sizeof buf, "%-20s %10.4f %10.4f %10.4f %8zu\n", m.label.c_str(), m.precision, m.recall,
                          m.f1, m.support);
            out += buf;
        }
        return out;
    }
};

/// Macro averages run over the gold label set.
inline ClassificationReport evaluate_classification(std::span<const std::string> predicted,
                                                    std::span<const std::string> gold) {
    if (predicted.size() != gold.size()) throw ArgumentError("prediction and gold lengths differ");
    if (gold.empty()) throw ArgumentError("nothing to evaluate");
    ClassificationReport r;
    std::set<std::string> all(gold.begin(), gold.end());
    all.insert(predicted.begin(), predicted.end());
    r.labels.assign(all.begin(), all.end());
    std::map<std::string, std::size_t> pos;
    for (std::size_t k = 0; k < r.labels.size(); ++k) pos[r.labels[k]] = k;
    r.confusion.assign(r.labels.size(), std::vector<std::size_t>(r.labels.size(), 0));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        ++r.confusion[pos[gold[i]]][pos[predicted[i]]];
        if (gold[i] == predicted[i]) ++hits;
    }
    r.accuracy = static_cast<double>(hits) / static_cast<double>(gold.size());
    std::set<std::string> gold_set(gold.begin(), gold.end());
    for (const auto& label : gold_set) {
        const std::size_t k = pos[label];
        std::size_t tp = r.confusion[k][k], gold_n = 0, pred_n = 0;
        for (std::size_t m = 0; m < r.labels.size(); ++m) {
            gold_n += r.confusion[k][m];
            pred_n += r.confusion[m][k];
        }
        ClassMetrics cm{label, 0.0, 0.0, 0.0, gold_n};
        if (pred_n > 0) cm.precision = static_cast<double>(tp) / static_cast<double>(pred_n);
        if (gold_n > 0) cm.recall = static_cast<double>(tp) / static_cast<double>(gold_n);
        if (cm.precision + cm.recall > 0) cm.f1 = 2 * cm.precision * cm.recall / (cm.precision + cm.recall);
        r.macro_precision += cm.precision;
        r.macro_recall += cm.recall;
        r.macro_f1 += cm.f1;
        r.per_class.push_back(cm);
    }
    const auto n = static_cast<double>(r.per_class.size());
    r.macro_precision /= n;
    r.macro_recall /= n;
    r.macro_f1 /= n;
    return r;
}

struct ClassificationExperiment {
    double train_fraction = 0.8;
    std::uint64_t split_seed = 1;
    LogRegOptions logreg;
};

/// Stop words out, seeded split, idf from the training part only, weighted
/// mean vectors, OvR training, test-set report.
inline ClassificationReport run_classification_experiment(std::span<const LabeledDocument> corpus,
                                                          const EmbeddingStore& store, const StopList& stoplist,
                                                          const ClassificationExperiment& exp = {}) {
    std::vector<LabeledDocument> filtered;
    filtered.reserve(corpus.size());
    for (const auto& d : corpus) filtered.push_back({d.label, remove_stopwords(Document{d.tokens}, stoplist).tokens});
    auto [train, test] = split_random(std::span<const LabeledDocument>(filtered), 1.0 - exp.train_fraction, exp.split_seed);
    if (test.empty()) throw DataError("test split is empty");

    std::vector<Document> train_docs;
    for (const auto& d : train) train_docs.push_back({d.tokens});
    const auto tfidf = fit_tfidf(train_docs);

    auto featurize = [&](const std::vector<LabeledDocument>& part, std::vector<std::vector<double>>& x,
                         std::vector<std::string>& y, std::size_t& empty) {
        for (const auto& d : part) {
            auto v = doc_vector(Document{d.tokens}, tfidf, store);
            empty += v.empty_features;
            x.push_back(std::move(v.values));
            y.push_back(d.label);
        }
    };
    std::vector<std::vector<double>> x_train, x_test;
    std::vector<std::string> y_train, y_test;
    std::size_t empty_train = 0, empty_test = 0;
    featurize(train, x_train, y_train, empty_train);
    featurize(test, x_test, y_test, empty_test);

    auto model = train_ovr_logreg(x_train, y_train, exp.logreg);
    std::vector<std::string> predicted;
    predicted.reserve(x_test.size());
    for (const auto& x : x_test) predicted.push_back(model.predict(x));

    auto report = evaluate_classification(predicted, y_test);
    report.config = {{"train_fraction", exp.train_fraction},
                     {"split_seed", exp.split_seed},
                     {"C", exp.logreg.C},
                     {"tolerance", exp.logreg.tolerance},
                     {"max_iters", exp.logreg.max_iters},
                     {"train_documents", train.size()},
                     {"test_documents", test.size()},
                     {"empty_feature_documents", {{"train", empty_train}, {"test", empty_test}}}};
    return report;
}

} // namespace wordbench
