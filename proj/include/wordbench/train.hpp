#pragma once

// Embedding trainers: skip-gram and CBOW with negative sampling, subword
// skip-gram, and GloVe over a windowed co-occurrence matrix.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "store.hpp"
#include "vocab.hpp"

namespace wordbench {

enum class Algorithm { sgns, cbow, glove, subword_sg };

inline std::string_view to_string(Algorithm a) {
    switch (a) {
    case Algorithm::sgns: return "sgns";
    case Algorithm::cbow: return "cbow";
    case Algorithm::glove: return "glove";
    case Algorithm::subword_sg: return "subword-sg";
    }
    return "?";
}

inline Algorithm parse_algorithm(std::string_view name) {
    if (name == "sgns") return Algorithm::sgns;
    if (name == "cbow") return Algorithm::cbow;
    if (name == "glove") return Algorithm::glove;
    if (name == "subword-sg") return Algorithm::subword_sg;
    throw ArgumentError("unknown algorithm '" + std::string(name) + "'");
}

struct TrainConfig {
    Algorithm algorithm = Algorithm::sgns;
    std::size_t dim = 300;
    int window = 5;
    std::uint64_t min_count = 5;
    int epochs = 5;
    double learning_rate = 0.025;
    int negatives = 5;
    double subsample_threshold = 1e-3;
    int min_n = 3;
    int max_n = 3;
    std::uint32_t bucket_count = 2'000'000;
    double x_max = 100.0;
    double alpha = 0.75;
    std::uint64_t seed = 1;
    int threads = 1;

    /// Per-algorithm defaults: 300-d window-5 SGNS/CBOW, 200-d window-80
    /// GloVe, 200-d window-3 subword skip-gram with 3-grams.
    static TrainConfig defaults_for(Algorithm algo) {
        TrainConfig c;
        c.algorithm = algo;
        switch (algo) {
        case Algorithm::sgns: break;
        case Algorithm::cbow: c.learning_rate = 0.05; break;
        case Algorithm::glove:
            c.dim = 200;
            c.window = 80;
            c.epochs = 15;
            c.learning_rate = 0.05;
            break;
        case Algorithm::subword_sg:
            c.dim = 200;
            c.window = 3;
            break;
        }
        return c;
    }

    SubwordIndexer indexer() const { return {min_n, max_n, bucket_count}; }

    void validate() const {
        if (dim == 0) throw ArgumentError("dim must be positive");
        if (window < 1) throw ArgumentError("window must be >= 1");
        if (epochs < 1) throw ArgumentError("epochs must be >= 1");
        if (min_count < 1) throw ArgumentError("min_count must be >= 1");
        if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
        if (threads < 1) throw ArgumentError("threads must be >= 1");
        if (algorithm != Algorithm::glove && negatives < 1) throw ArgumentError("negatives must be >= 1");
        if (algorithm == Algorithm::subword_sg) indexer().validate();
        if (algorithm == Algorithm::glove && !(x_max > 0.0)) throw ArgumentError("x_max must be positive");
    }
};

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

/// Linear decay from lr0 to lr0 * 1e-4 over `total` processed tokens.
inline double linear_learning_rate(double lr0, std::uint64_t processed, std::uint64_t total) noexcept {
    double frac = total == 0 ? 1.0 : static_cast<double>(processed) / static_cast<double>(total);
    return lr0 * std::max(1e-4, 1.0 - frac);
}

/// Probability that subsampling discards a token of relative frequency `freq`.
inline double discard_probability(double freq, double threshold) noexcept {
    if (threshold <= 0.0 || freq <= 0.0) return 0.0;
    return std::max(0.0, 1.0 - std::sqrt(threshold / freq));
}

namespace detail {

inline void init_uniform(std::vector<float>& m, std::size_t dim, SplitMix64& rng) {
    const double half = 0.5 / static_cast<double>(dim);
    for (auto& x : m) x = static_cast<float>(rng.uniform(-half, half));
}

inline bool all_finite(std::span<const float> m) noexcept {
    return std::all_of(m.begin(), m.end(), [](float x) { return std::isfinite(x); });
}

inline float fdot(const float* a, const float* b, std::size_t n) noexcept {
    float s = 0.0f;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

/// Shared negative-sampling trainer for sgns, cbow and subword_sg.
class NegativeSamplingTrainer {
public:
    NegativeSamplingTrainer(std::span<const Document> corpus, const Vocabulary& vocab, const TrainConfig& cfg)
        : vocab_(vocab), cfg_(cfg), sampler_(vocab, 0.75), dim_(cfg.dim) {
        cfg_.validate();
        for (const auto& d : corpus) {
            auto ids = vocab.encode(d);
            train_tokens_ += ids.size();
            if (!ids.empty()) docs_.push_back(std::move(ids));
        }
        if (train_tokens_ == 0) throw DataError("corpus has no in-vocabulary tokens");

        SplitMix64 init(cfg_.seed);
        input_.resize(vocab.size() * dim_);
        init_uniform(input_, dim_, init);
        output_.assign(vocab.size() * dim_, 0.0f);
        if (cfg_.algorithm == Algorithm::subword_sg) {
            auto idx = cfg_.indexer();
            buckets_.resize(std::size_t{idx.bucket_count} * dim_);
            init_uniform(buckets_, dim_, init);
            subword_ids_.reserve(vocab.size());
            for (const auto& e : vocab.entries()) subword_ids_.push_back(ngram_buckets(e.word, idx));
        }
        keep_prob_.resize(vocab.size());
        for (std::uint32_t i = 0; i < vocab.size(); ++i) {
            double f = static_cast<double>(vocab.count(i)) / static_cast<double>(vocab.total_count());
            keep_prob_[i] = 1.0 - discard_probability(f, cfg_.subsample_threshold);
        }
    }

    EmbeddingStore run() {
        const std::uint64_t total = train_tokens_ * static_cast<std::uint64_t>(cfg_.epochs);
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            auto workers = static_cast<std::size_t>(std::min<std::size_t>(cfg_.threads, docs_.size()));
            if (workers <= 1) {
                SplitMix64 rng(derive_seed(cfg_.seed, static_cast<std::uint64_t>(epoch)));
                run_shard(0, docs_.size(), rng, total);
            } else {
                std::vector<std::thread> pool;
                for (std::size_t w = 0; w < workers; ++w) {
                    pool.emplace_back([&, w] {
                        SplitMix64 rng(derive_seed(cfg_.seed, static_cast<std::uint64_t>(epoch) * 1024 + w));
                        run_shard(docs_.size() * w / workers, docs_.size() * (w + 1) / workers, rng, total);
                    });
                }
                for (auto& t : pool) t.join();
            }
            if (!all_finite(input_) || !all_finite(output_) || !all_finite(buckets_))
                throw DataError("training diverged: non-finite parameters after epoch " + std::to_string(epoch));
        }
        std::optional<EmbeddingStore::Subwords> sw;
        if (cfg_.algorithm == Algorithm::subword_sg) sw = EmbeddingStore::Subwords{cfg_.indexer(), widen(buckets_)};
        return EmbeddingStore(vocab_.words(), dim_, widen(input_), std::move(sw));
    }

private:
    float* in_row(std::uint32_t id) { return input_.data() + std::size_t{id} * dim_; }
    float* out_row(std::uint32_t id) { return output_.data() + std::size_t{id} * dim_; }
    float* bucket_row(std::uint32_t b) { return buckets_.data() + std::size_t{b} * dim_; }

    void run_shard(std::size_t begin, std::size_t end, SplitMix64& rng, std::uint64_t total) {
        std::vector<std::uint32_t> kept;
        std::vector<float> hidden(dim_), grad(dim_);
        std::vector<float*> rows;
        for (std::size_t di = begin; di < end; ++di) {
            const auto& doc = docs_[di];
            double lr = linear_learning_rate(cfg_.learning_rate, processed_.load(std::memory_order_relaxed), total);
            processed_.fetch_add(doc.size(), std::memory_order_relaxed);
            kept.clear();
            for (auto id : doc)
                if (keep_prob_[id] >= 1.0 || rng.uniform() < keep_prob_[id]) kept.push_back(id);
            const auto n = static_cast<long>(kept.size());
            for (long pos = 0; pos < n; ++pos) {
                const long radius = 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(cfg_.window)));
                const long lo = std::max(0L, pos - radius), hi = std::min(n - 1, pos + radius);
                const auto center = kept[static_cast<std::size_t>(pos)];
                if (cfg_.algorithm == Algorithm::cbow) {
                    rows.clear();
                    for (long c = lo; c <= hi; ++c)
                        if (c != pos) rows.push_back(in_row(kept[static_cast<std::size_t>(c)]));
                    if (rows.empty()) continue;
                    mean_rows(rows, hidden);
                    std::fill(grad.begin(), grad.end(), 0.0f);
                    contrast(hidden, center, static_cast<float>(lr), grad, rng);
                    apply(rows, grad);
                } else {
                    rows.clear();
                    rows.push_back(in_row(center));
                    if (cfg_.algorithm == Algorithm::subword_sg)
                        for (auto b : subword_ids_[center]) rows.push_back(bucket_row(b));
                    for (long c = lo; c <= hi; ++c) {
                        if (c == pos) continue;
                        mean_rows(rows, hidden);
                        std::fill(grad.begin(), grad.end(), 0.0f);
                        contrast(hidden, kept[static_cast<std::size_t>(c)], static_cast<float>(lr), grad, rng);
                        apply(rows, grad);
                    }
                }
            }
        }
    }

    void mean_rows(const std::vector<float*>& rows, std::vector<float>& out) const {
        std::fill(out.begin(), out.end(), 0.0f);
        for (const float* r : rows)
            for (std::size_t d = 0; d < dim_; ++d) out[d] += r[d];
        if (rows.size() > 1) {
            const float inv = 1.0f / static_cast<float>(rows.size());
            for (auto& x : out) x *= inv;
        }
    }

    // Every contributing input row receives the same hidden-layer error.
    void apply(const std::vector<float*>& rows, const std::vector<float>& grad) const {
        for (float* r : rows)
            for (std::size_t d = 0; d < dim_; ++d) r[d] += grad[d];
    }

    // One positive target plus `negatives` noise words; accumulates the
    // gradient w.r.t. the hidden vector into `grad` and updates output rows.
    void contrast(const std::vector<float>& hidden, std::uint32_t positive, float lr, std::vector<float>& grad,
                  SplitMix64& rng) {
        for (int k = 0; k <= cfg_.negatives; ++k) {
            std::uint32_t target = positive;
            float label = 1.0f;
            if (k > 0) {
                target = sampler_.draw(rng);
                if (target == positive) continue;
                label = 0.0f;
            }
            float* out = out_row(target);
            const float score = fdot(hidden.data(), out, dim_);
            const float g = (label - static_cast<float>(sigmoid(score))) * lr;
            for (std::size_t d = 0; d < dim_; ++d) grad[d] += g * out[d];
            for (std::size_t d = 0; d < dim_; ++d) out[d] += g * hidden[d];
        }
    }

    const Vocabulary& vocab_;
    TrainConfig cfg_;
    NegativeSampler sampler_;
    std::size_t dim_;
    std::vector<std::vector<std::uint32_t>> docs_;
    std::uint64_t train_tokens_ = 0;
    std::vector<float> input_, output_, buckets_;
    std::vector<std::vector<std::uint32_t>> subword_ids_;
    std::vector<double> keep_prob_;
    std::atomic<std::uint64_t> processed_{0};
};

inline TrainConfig with_algorithm(TrainConfig cfg, Algorithm algo) {
    cfg.algorithm = algo;
    return cfg;
}

} // namespace detail

inline EmbeddingStore train_sgns(std::span<const Document> corpus, const Vocabulary& vocab, const TrainConfig& cfg) {
    return detail::NegativeSamplingTrainer(corpus, vocab, detail::with_algorithm(cfg, Algorithm::sgns)).run();
}

inline EmbeddingStore train_cbow(std::span<const Document> corpus, const Vocabulary& vocab, const TrainConfig& cfg) {
    return detail::NegativeSamplingTrainer(corpus, vocab, detail::with_algorithm(cfg, Algorithm::cbow)).run();
}

/// Output store keeps the bucket table so OOV words can be composed.
inline EmbeddingStore train_subword_sg(std::span<const Document> corpus, const Vocabulary& vocab,
                                       const SubwordIndexer& indexer, const TrainConfig& cfg) {
    auto c = detail::with_algorithm(cfg, Algorithm::subword_sg);
    c.min_n = indexer.min_n;
    c.max_n = indexer.max_n;
    c.bucket_count = indexer.bucket_count;
    return detail::NegativeSamplingTrainer(corpus, vocab, c).run();
}

// ---------------------------------------------------------------------------
// GloVe

/// Symmetric sparse co-occurrence weights, entries sorted by (i, j).
struct CooccurrenceMatrix {
    struct Entry {
        std::uint32_t i = 0;
        std::uint32_t j = 0;
        double x = 0.0;

        friend bool operator==(const Entry&, const Entry&) = default;
    };

    std::size_t vocab_size = 0;
    std::vector<Entry> entries;

    bool empty() const noexcept { return entries.empty(); }

    std::optional<double> at(std::uint32_t i, std::uint32_t j) const {
        auto it = std::lower_bound(entries.begin(), entries.end(), Entry{i, j, 0.0}, [](const Entry& a, const Entry& b) {
            return a.i != b.i ? a.i < b.i : a.j < b.j;
        });
        if (it == entries.end() || it->i != i || it->j != j) return std::nullopt;
        return it->x;
    }
};

/// Every center->context observation at distance d <= window adds 1/d to both
/// X[i][j] and X[j][i]. Windows stay within a document; OOV tokens are dropped
/// before distances are measured.
inline CooccurrenceMatrix build_cooccurrence(std::span<const Document> corpus, const Vocabulary& vocab, int window) {
    if (window < 1) throw ArgumentError("window must be >= 1");
    std::unordered_map<std::uint64_t, double> acc;
    auto key = [](std::uint32_t i, std::uint32_t j) { return (std::uint64_t{i} << 32) | j; };
    for (const auto& doc : corpus) {
        auto ids = vocab.encode(doc);
        for (std::size_t p = 0; p < ids.size(); ++p) {
            for (std::size_t d = 1; d <= static_cast<std::size_t>(window) && p + d < ids.size(); ++d) {
                const double w = 1.0 / static_cast<double>(d);
                acc[key(ids[p], ids[p + d])] += w;
                acc[key(ids[p + d], ids[p])] += w;
            }
        }
    }
    CooccurrenceMatrix m;
    m.vocab_size = vocab.size();
    m.entries.reserve(acc.size());
    for (const auto& [k, x] : acc)
        m.entries.push_back({static_cast<std::uint32_t>(k >> 32), static_cast<std::uint32_t>(k & 0xFFFFFFFFu), x});
    std::sort(m.entries.begin(), m.entries.end(),
              [](const auto& a, const auto& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
    return m;
}

/// Spill format: (u32 i, u32 j, f64 x) little-endian triples.
inline void write_cooccurrence(std::ostream& out, const CooccurrenceMatrix& m) {
    for (const auto& e : m.entries) {
        detail::put_le<std::uint32_t>(out, e.i);
        detail::put_le<std::uint32_t>(out, e.j);
        detail::put_le<double>(out, e.x);
    }
}

inline CooccurrenceMatrix read_cooccurrence(std::istream& in, std::size_t vocab_size) {
    CooccurrenceMatrix m;
    m.vocab_size = vocab_size;
    while (in.peek() != std::char_traits<char>::eof()) {
        CooccurrenceMatrix::Entry e;
        e.i = detail::get_le<std::uint32_t>(in);
        e.j = detail::get_le<std::uint32_t>(in);
        e.x = detail::get_le<double>(in);
        if (e.i >= vocab_size || e.j >= vocab_size) throw FormatError("co-occurrence index out of range");
        m.entries.push_back(e);
    }
    std::sort(m.entries.begin(), m.entries.end(),
              [](const auto& a, const auto& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
    return m;
}

/// f(x) = (x / x_max)^alpha below x_max, 1 above.
inline double glove_weight(double x, double x_max, double alpha) noexcept {
    return x < x_max ? std::pow(x / x_max, alpha) : 1.0;
}

struct GloveTrace {
    double initial_loss = 0.0;
    std::vector<double> epoch_loss; ///< full objective after each epoch
};

namespace detail {

class GloveTrainer {
public:
    GloveTrainer(const CooccurrenceMatrix& cooc, const TrainConfig& cfg) : cooc_(cooc), cfg_(cfg), dim_(cfg.dim) {
        auto c = cfg;
        c.algorithm = Algorithm::glove;
        c.validate();
        if (cooc.empty()) throw DataError("co-occurrence matrix is empty");
        for (const auto& e : cooc.entries) {
            if (!(e.x > 0.0) || !std::isfinite(e.x)) throw DataError("co-occurrence weights must be positive");
            if (e.i >= cooc.vocab_size || e.j >= cooc.vocab_size) throw DataError("co-occurrence index out of range");
        }
        const std::size_t v = cooc.vocab_size;
        SplitMix64 init(cfg.seed);
        w_.resize(v * dim_);
        ctx_.resize(v * dim_);
        init_uniform(w_, dim_, init);
        init_uniform(ctx_, dim_, init);
        bw_.assign(v, 0.0f);
        bc_.assign(v, 0.0f);
        gw_.assign(v * dim_, 1.0f);
        gc_.assign(v * dim_, 1.0f);
        gbw_.assign(v, 1.0f);
        gbc_.assign(v, 1.0f);
        order_.resize(cooc.entries.size());
        for (std::size_t k = 0; k < order_.size(); ++k) order_[k] = k;
    }

    double loss() const {
        double total = 0.0;
        for (const auto& e : cooc_.entries) {
            double diff = residual(e);
            total += glove_weight(e.x, cfg_.x_max, cfg_.alpha) * diff * diff;
        }
        return total;
    }

    void run(GloveTrace* trace) {
        if (trace) {
            trace->initial_loss = loss();
            trace->epoch_loss.clear();
        }
        SplitMix64 rng(derive_seed(cfg_.seed, 0x61));
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            rng.shuffle(order_.begin(), order_.end());
            auto workers = static_cast<std::size_t>(std::min<std::size_t>(cfg_.threads, order_.size()));
            if (workers <= 1) {
                pass(0, order_.size());
            } else {
                std::vector<std::thread> pool;
                for (std::size_t w = 0; w < workers; ++w)
                    pool.emplace_back([&, w] { pass(order_.size() * w / workers, order_.size() * (w + 1) / workers); });
                for (auto& t : pool) t.join();
            }
            if (!all_finite(w_) || !all_finite(ctx_) || !all_finite(bw_) || !all_finite(bc_))
                throw DataError("GloVe diverged: non-finite parameters after epoch " + std::to_string(epoch));
            if (trace) trace->epoch_loss.push_back(loss());
        }
    }

    /// Emitted vector per word: w_i + w~_i.
    std::vector<double> combined() const {
        std::vector<double> out(w_.size());
        for (std::size_t k = 0; k < w_.size(); ++k) out[k] = static_cast<double>(w_[k]) + static_cast<double>(ctx_[k]);
        return out;
    }

private:
    double residual(const CooccurrenceMatrix::Entry& e) const {
        const float* wi = w_.data() + std::size_t{e.i} * dim_;
        const float* cj = ctx_.data() + std::size_t{e.j} * dim_;
        double s = 0.0;
        for (std::size_t d = 0; d < dim_; ++d) s += static_cast<double>(wi[d]) * cj[d];
        return s + bw_[e.i] + bc_[e.j] - std::log(e.x);
    }

    // AdaGrad on 0.5 * f(x) * residual^2.
    void pass(std::size_t begin, std::size_t end) {
        const float lr = static_cast<float>(cfg_.learning_rate);
        for (std::size_t k = begin; k < end; ++k) {
            const auto& e = cooc_.entries[order_[k]];
            const auto fdiff = static_cast<float>(glove_weight(e.x, cfg_.x_max, cfg_.alpha) * residual(e));
            float* wi = w_.data() + std::size_t{e.i} * dim_;
            float* cj = ctx_.data() + std::size_t{e.j} * dim_;
            float* gwi = gw_.data() + std::size_t{e.i} * dim_;
            float* gcj = gc_.data() + std::size_t{e.j} * dim_;
            for (std::size_t d = 0; d < dim_; ++d) {
                const float g1 = fdiff * cj[d];
                const float g2 = fdiff * wi[d];
                wi[d] -= lr * g1 / std::sqrt(gwi[d]);
                cj[d] -= lr * g2 / std::sqrt(gcj[d]);
                gwi[d] += g1 * g1;
                gcj[d] += g2 * g2;
            }
            bw_[e.i] -= lr * fdiff / std::sqrt(gbw_[e.i]);
            bc_[e.j] -= lr * fdiff / std::sqrt(gbc_[e.j]);
            gbw_[e.i] += fdiff * fdiff;
            gbc_[e.j] += fdiff * fdiff;
        }
    }

    const CooccurrenceMatrix& cooc_;
    TrainConfig cfg_;
    std::size_t dim_;
    std::vector<float> w_, ctx_, bw_, bc_, gw_, gc_, gbw_, gbc_;
    std::vector<std::size_t> order_;
};

} // namespace detail

inline EmbeddingStore train_glove(const CooccurrenceMatrix& cooc, const Vocabulary& vocab, const TrainConfig& cfg,
                                  GloveTrace* trace = nullptr) {
    if (cooc.vocab_size != vocab.size()) throw ArgumentError("co-occurrence matrix and vocabulary sizes differ");
    detail::GloveTrainer trainer(cooc, cfg);
    trainer.run(trace);
    return EmbeddingStore(vocab.words(), cfg.dim, trainer.combined());
}

/// Builds the vocabulary with cfg.min_count and dispatches on cfg.algorithm.
inline EmbeddingStore train(std::span<const Document> corpus, const TrainConfig& cfg, GloveTrace* trace = nullptr) {
    cfg.validate();
    auto vocab = build_vocab(corpus, cfg.min_count);
    switch (cfg.algorithm) {
    case Algorithm::sgns: return train_sgns(corpus, vocab, cfg);
    case Algorithm::cbow: return train_cbow(corpus, vocab, cfg);
    case Algorithm::subword_sg: return train_subword_sg(corpus, vocab, cfg.indexer(), cfg);
    case Algorithm::glove: return train_glove(build_cooccurrence(corpus, vocab, cfg.window), vocab, cfg, trace);
    }
    throw ArgumentError("unknown algorithm");
}

} // namespace wordbench
