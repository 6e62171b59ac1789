#include <gtest/gtest.h>

#include <cmath>

#include <oracles.hpp>
#include <wordbench/classify.hpp>
#include <wordbench/rng.hpp>

using namespace wordbench;

namespace {

Document doc(std::initializer_list<const char*> words) {
    Document d;
    for (auto* w : words) d.tokens.emplace_back(w);
    return d;
}

struct Points {
    std::vector<std::vector<double>> x;
    std::vector<std::string> y;
};

// Two classes separated by a gap of 2 along the first axis.
Points separable(std::uint64_t seed) {
    SplitMix64 rng(seed);
    Points p;
    for (int i = 0; i < 40; ++i) {
        const bool pos = i % 2 == 0;
        const double u = rng.uniform(0, 2), v = rng.uniform(-2, 2);
        p.x.push_back({pos ? 1 + u : -1 - u, v});
        p.y.push_back(pos ? "pos" : "neg");
    }
    return p;
}

std::vector<std::string> labels(std::initializer_list<const char*> l) { return {l.begin(), l.end()}; }

// Class-disjoint vocabularies with orthogonal vectors.
std::vector<LabeledDocument> synthetic_corpus(std::size_t n, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<LabeledDocument> out;
    for (std::size_t i = 0; i < n; ++i) {
        const bool sport = i % 2 == 0;
        LabeledDocument d{sport ? "sport" : "politics", {}};
        for (int k = 0; k < 8; ++k) d.tokens.push_back((sport ? "s" : "p") + std::to_string(rng.below(5)));
        d.tokens.push_back("the");
        out.push_back(std::move(d));
    }
    return out;
}

EmbeddingStore synthetic_store() {
    std::vector<std::string> words;
    std::vector<double> rows;
    for (int k = 0; k < 5; ++k) {
        words.push_back("s" + std::to_string(k));
        rows.insert(rows.end(), {1.0 + 0.1 * k, 0.0, 0.05 * k});
    }
    for (int k = 0; k < 5; ++k) {
        words.push_back("p" + std::to_string(k));
        rows.insert(rows.end(), {0.0, 1.0 + 0.1 * k, 0.05 * k});
    }
    words.push_back("the");
    rows.insert(rows.end(), {5.0, 5.0, 5.0});
    return EmbeddingStore(words, 3, rows);
}

} // namespace

TEST(Tfidf, SmoothedIdf) {
    std::vector<Document> docs{doc({"a", "b"}), doc({"a"})};
    auto m = fit_tfidf(docs);
    EXPECT_EQ(m.idf("a"), 1.0);
    EXPECT_NEAR(m.idf("b"), 1.405465, 1e-6);
    EXPECT_NEAR(m.idf("unseen"), 2.098612, 1e-6);
    for (auto* w : {"a", "b", "zz"}) EXPECT_GE(m.idf(w), 1.0);
    EXPECT_EQ(m.document_frequency("a"), 2u);
}

TEST(DocVec, SingleTokenIsItsVector) {
    EmbeddingStore s({"a", "b"}, 2, {0.3, -0.7, 1, 1});
    std::vector<Document> docs{doc({"a"})};
    auto v = doc_vector(doc({"a", "oov"}), fit_tfidf(docs), s);
    EXPECT_FALSE(v.empty_features);
    EXPECT_EQ(v.values, (std::vector<double>{0.3, -0.7}));
}

TEST(DocVec, MidpointAndWeighted) {
    EmbeddingStore s({"a", "b"}, 2, {1, 0, 0, 1});
    std::vector<Document> both{doc({"a", "b"})};
    auto mid = doc_vector(doc({"a", "b"}), fit_tfidf(both), s);
    EXPECT_EQ(mid.values, (std::vector<double>{0.5, 0.5}));

    // {a:2, b:1}: idf(a) = 1, idf(b) = ln 3 + 1 (an idf of exactly 2 needs a non-integer N).
    std::vector<Document> train{doc({"a"}), doc({"a"})};
    auto m = fit_tfidf(train);
    const double ia = m.idf("a"), ib = m.idf("b");
    auto v = doc_vector(doc({"a", "a", "b"}), m, s);
    EXPECT_NEAR(v.values[0], 2 * ia / (2 * ia + ib), 1e-15);
    EXPECT_NEAR(v.values[1], ib / (2 * ia + ib), 1e-15);
}

TEST(DocVec, EmptyFeatures) {
    EmbeddingStore s({"a"}, 2, {1, 2});
    std::vector<Document> train{doc({"a"})};
    auto v = doc_vector(doc({"zz"}), fit_tfidf(train), s);
    EXPECT_TRUE(v.empty_features);
    EXPECT_EQ(v.values, (std::vector<double>{0, 0}));
}

TEST(DocVec, ConvexHull) {
    SplitMix64 rng(3);
    std::vector<std::string> words;
    std::vector<double> rows;
    for (int i = 0; i < 6; ++i) {
        words.push_back("w" + std::to_string(i));
        for (int d = 0; d < 2; ++d) rows.push_back(rng.uniform(-1, 1));
    }
    EmbeddingStore s(words, 2, rows);
    std::vector<Document> train{doc({"w0", "w1"}), doc({"w2"})};
    auto v = doc_vector(doc({"w0", "w3", "w3", "w5"}), fit_tfidf(train), s);
    for (int d = 0; d < 2; ++d) {
        double lo = 1e9, hi = -1e9;
        for (int i : {0, 3, 5}) {
            lo = std::min(lo, rows[static_cast<std::size_t>(2 * i + d)]);
            hi = std::max(hi, rows[static_cast<std::size_t>(2 * i + d)]);
        }
        EXPECT_GE(v.values[static_cast<std::size_t>(d)], lo - 1e-15);
        EXPECT_LE(v.values[static_cast<std::size_t>(d)], hi + 1e-15);
    }
}

TEST(LogReg, GradientMatchesFiniteDifferences) {
    auto p = separable(11);
    std::vector<int> t;
    for (const auto& y : p.y) t.push_back(y == "pos" ? 1 : -1);
    BinaryProblem prob{p.x, t, 0.7};
    SplitMix64 rng(2);
    std::vector<double> params{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}, grad(3);
    prob.gradient(params, grad);
    for (std::size_t k = 0; k < params.size(); ++k) {
        double num = oracle::central_difference([&] { return prob.objective(params); }, params[k], 1e-5);
        EXPECT_LT(oracle::relative_error(grad[k], num), 1e-4) << k;
    }
}

TEST(LogReg, SeparableSetFitsPerfectly) {
    auto p = separable(1);
    auto model = train_ovr_logreg(p.x, p.y);
    EXPECT_EQ(model.classes(), labels({"neg", "pos"}));
    for (std::size_t i = 0; i < p.x.size(); ++i) {
        EXPECT_EQ(model.predict(p.x[i]), p.y[i]);
        // margin oracle: the true separating direction is the first axis
        EXPECT_EQ(predict(model, p.x[i]), p.x[i][0] > 0 ? "pos" : "neg");
        for (double prob : model.probabilities(p.x[i])) {
            EXPECT_GT(prob, 0.0);
            EXPECT_LT(prob, 1.0);
        }
    }
}

TEST(LogReg, DuplicatedDataWithHalfC) {
    auto p = separable(4);
    auto dup = p;
    dup.x.insert(dup.x.end(), p.x.begin(), p.x.end());
    dup.y.insert(dup.y.end(), p.y.begin(), p.y.end());
    auto base = train_ovr_logreg(p.x, p.y, {1.0, 1e-4, 1000});
    auto twin = train_ovr_logreg(dup.x, dup.y, {0.5, 1e-4, 1000});
    SplitMix64 rng(8);
    for (const auto& x : p.x) EXPECT_EQ(base.predict(x), twin.predict(x));
    for (int k = 0; k < 200; ++k) {
        std::vector<double> q{rng.uniform(-3, 3), rng.uniform(-3, 3)};
        auto a = base.scores(q);
        if (std::abs(a[0] - a[1]) > 1e-3) {
            EXPECT_EQ(base.predict(q), twin.predict(q));
        }
    }
}

TEST(LogReg, ObjectiveNonIncreasing) {
    auto p = separable(6);
    std::vector<int> t;
    for (const auto& y : p.y) t.push_back(y == "pos" ? 1 : -1);
    std::vector<double> trace;
    fit_binary({p.x, t, 1.0}, {}, &trace);
    ASSERT_GT(trace.size(), 2u);
    for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LE(trace[k], trace[k - 1]);
}

TEST(LogReg, Errors) {
    std::vector<std::vector<double>> x{{1.0}, {2.0}};
    EXPECT_THROW(train_ovr_logreg(x, labels({"a", "a"})), ArgumentError);
    std::vector<std::vector<double>> bad{{1.0}, {std::nan("")}};
    EXPECT_THROW(train_ovr_logreg(bad, labels({"a", "b"})), DataError);
    auto m = train_ovr_logreg(x, labels({"a", "b"}));
    std::vector<double> wrong{1.0, 2.0};
    EXPECT_THROW(m.predict(wrong), ArgumentError);
}

TEST(LogReg, PredictTieRule) {
    LogRegModel zero({"x", "y", "z"}, {{0, 0}, {0, 0}, {0, 0}}, {0, 0, 0});
    std::vector<double> q{3, -1};
    EXPECT_EQ(zero.predict(q), "x");
    LogRegModel dom({"x", "y"}, {{0, 0}, {0, 0}}, {0, 5});
    EXPECT_EQ(dom.predict(q), "y");
}

TEST(Metrics, ConfusionExample) {
    auto r = evaluate_classification(labels({"A", "B", "B", "B"}), labels({"A", "A", "B", "B"}));
    EXPECT_EQ(r.accuracy, 0.75);
    EXPECT_NEAR(r.macro_precision, (1 + 2.0 / 3) / 2, 1e-15);
    EXPECT_EQ(r.macro_recall, 0.75);
    EXPECT_NEAR(r.macro_f1, (2.0 / 3 + 0.8) / 2, 1e-15);
    EXPECT_NEAR(r.macro_f1, 0.7333, 1e-4);
    EXPECT_EQ(r.confusion, (std::vector<std::vector<std::size_t>>{{1, 1}, {0, 2}}));
}

TEST(Metrics, PerfectAndInverted) {
    auto ok = evaluate_classification(labels({"a", "b", "c"}), labels({"a", "b", "c"}));
    EXPECT_EQ(ok.accuracy, 1.0);
    EXPECT_EQ(ok.macro_precision, 1.0);
    EXPECT_EQ(ok.macro_recall, 1.0);
    EXPECT_EQ(ok.macro_f1, 1.0);
    auto bad = evaluate_classification(labels({"B", "A"}), labels({"A", "B"}));
    EXPECT_EQ(bad.accuracy, 0.0);
    EXPECT_EQ(bad.macro_f1, 0.0);
    EXPECT_THROW(evaluate_classification(labels({"a"}), labels({"a", "b"})), ArgumentError);
}

TEST(Metrics, PermutationInvariant) {
    auto g = labels({"a", "b", "c", "a", "b", "a", "c"}), p = labels({"a", "c", "c", "b", "b", "a", "a"});
    auto base = evaluate_classification(p, g).to_json();
    std::vector<std::size_t> idx(g.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    SplitMix64 rng(1);
    for (int round = 0; round < 10; ++round) {
        rng.shuffle(idx.begin(), idx.end());
        std::vector<std::string> g2, p2;
        for (auto k : idx) {
            g2.push_back(g[k]);
            p2.push_back(p[k]);
        }
        EXPECT_EQ(evaluate_classification(p2, g2).to_json(), base);
    }
}

TEST(Experiment, SyntheticCorpusPerfect) {
    StopList stop{"the"};
    auto r = run_classification_experiment(synthetic_corpus(100, 2), synthetic_store(), stop);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.macro_f1, 1.0);
    EXPECT_EQ(r.config["test_documents"], 20);
    EXPECT_EQ(r.config["split_seed"], 1);
}

TEST(Experiment, Deterministic) {
    StopList stop{"the"};
    auto corpus = synthetic_corpus(60, 5);
    ClassificationExperiment exp;
    exp.split_seed = 42;
    EXPECT_EQ(run_classification_experiment(corpus, synthetic_store(), stop, exp).to_json().dump(),
              run_classification_experiment(corpus, synthetic_store(), stop, exp).to_json().dump());
}

TEST(Experiment, TestSplitDoesNotLeakIntoIdf) {
    auto corpus = synthetic_corpus(50, 9);
    std::vector<std::size_t> idx(corpus.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    auto [train_idx, test_idx] = split_random(idx, 0.2, 1);
    std::vector<Document> train_docs;
    for (auto k : train_idx) train_docs.push_back({corpus[k].tokens});
    auto before = fit_tfidf(train_docs);

    // Perturb every test document; the idf fitted on the train part is unchanged.
    auto perturbed = corpus;
    for (auto k : test_idx) perturbed[k].tokens.assign(10, "s0");
    std::vector<Document> train_after;
    for (auto k : train_idx) train_after.push_back({perturbed[k].tokens});
    auto after = fit_tfidf(train_after);
    for (auto* w : {"s0", "s1", "p2", "the", "zz"}) EXPECT_EQ(before.idf(w), after.idf(w));
}
