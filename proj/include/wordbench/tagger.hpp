#pragma once

// Morphological tagger: frozen word vectors + char-CNN features -> one
// bidirectional LSTM -> two softmax heads (UPOS and the joined FEATS string).
// Backpropagation is written out by hand; the scalar type is a template
// parameter so the same code runs in float for training and double for
// finite-difference checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "store.hpp"
#include "utf8.hpp"

namespace wordbench {

struct TaggerConfig {
    double lr0 = 0.6;
    double decay = 0.05;
    int epochs = 200;
    double dev_fraction = 0.2;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    int char_emb_dim = 30;
    int char_conv_width = 3;
    int char_filters = 30;
    int lstm_hidden = 150;
    double clip_norm = 5.0; ///< global gradient norm cap per step; 0 disables
    int threads = 1;        ///< seeds trained concurrently

    /// Time-based decay: lr0 / (1 + decay * epoch).
    double learning_rate(int epoch) const { return lr0 / (1.0 + decay * static_cast<double>(epoch)); }

    void validate() const {
        if (!(lr0 > 0.0)) throw ArgumentError("lr0 must be positive");
        if (decay < 0.0) throw ArgumentError("decay must be non-negative");
        if (epochs < 1) throw ArgumentError("epochs must be >= 1");
        if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw ArgumentError("dev_fraction must lie in (0, 1)");
        if (seeds.empty()) throw ArgumentError("at least one seed required");
        if (char_emb_dim < 1 || char_conv_width < 1 || char_filters < 1 || lstm_hidden < 1)
            throw ArgumentError("tagger layer sizes must be positive");
        if (threads < 1) throw ArgumentError("threads must be >= 1");
    }
};

/// Tag and character inventories fixed from training data. Character id 0 is
/// reserved for characters never seen in training.
struct TagInventory {
    std::vector<std::string> upos;
    std::vector<std::string> feats;
    std::vector<char32_t> chars; ///< chars[k] has id k + 1

    static TagInventory from(std::span<const ConlluSentence> sentences) {
        std::set<std::string> upos, feats;
        std::set<char32_t> chars;
        for (const auto& s : sentences)
            for (const auto& t : s.tokens) {
                upos.insert(t.upos);
                feats.insert(t.feats);
                for (char32_t c : utf8::decode_all(t.form)) chars.insert(c);
            }
        TagInventory inv;
        inv.upos.assign(upos.begin(), upos.end());
        inv.feats.assign(feats.begin(), feats.end());
        inv.chars.assign(chars.begin(), chars.end());
        inv.reindex();
        return inv;
    }

    void reindex() {
        upos_index.clear();
        feats_index.clear();
        char_index.clear();
        for (std::size_t k = 0; k < upos.size(); ++k) upos_index[upos[k]] = static_cast<int>(k);
        for (std::size_t k = 0; k < feats.size(); ++k) feats_index[feats[k]] = static_cast<int>(k);
        for (std::size_t k = 0; k < chars.size(); ++k) char_index[chars[k]] = static_cast<std::uint32_t>(k + 1);
    }

    int upos_id(const std::string& tag) const {
        auto it = upos_index.find(tag);
        return it == upos_index.end() ? -1 : it->second;
    }
    int feats_id(const std::string& tag) const {
        auto it = feats_index.find(tag);
        return it == feats_index.end() ? -1 : it->second;
    }
    std::uint32_t char_id(char32_t c) const {
        auto it = char_index.find(c);
        return it == char_index.end() ? 0 : it->second;
    }

    std::unordered_map<std::string, int> upos_index, feats_index;
    std::unordered_map<char32_t, std::uint32_t> char_index;
};

template <typename T>
struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<T> data;

    std::size_t rows() const { return shape.front(); }
    std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }
    T* row(std::size_t r) { return data.data() + r * cols(); }
    const T* row(std::size_t r) const { return data.data() + r * cols(); }
};

enum TaggerParam : std::size_t {
    char_emb,
    conv_w,
    conv_b,
    fwd_w,
    fwd_b,
    bwd_w,
    bwd_b,
    upos_w,
    upos_b,
    feats_w,
    feats_b,
    tagger_param_count
};

inline constexpr std::array<const char*, tagger_param_count> tagger_param_names{
    "char_emb", "conv_w", "conv_b", "fwd_w", "fwd_b", "bwd_w", "bwd_b", "upos_w", "upos_b", "feats_w", "feats_b"};

struct TaggerShape {
    std::size_t word_dim = 0;
    std::size_t char_dim = 30;
    std::size_t conv_width = 3;
    std::size_t filters = 30;
    std::size_t hidden = 150;

    std::size_t input_dim() const { return word_dim + filters; }
};

template <typename T>
class TaggerModel {
public:
    TagInventory inventory;
    TaggerShape shape;
    std::vector<Tensor<T>> params;

    TaggerModel() = default;

    /// Glorot-uniform weights, zero biases except forget gates (1).
    TaggerModel(TagInventory inv, TaggerShape s, std::uint64_t seed) : inventory(std::move(inv)), shape(s) {
        const std::size_t H = shape.hidden, I = shape.input_dim();
        const std::size_t C = inventory.chars.size() + 1;
        auto add = [&](TaggerParam p, std::vector<std::size_t> dims) {
            Tensor<T> t{tagger_param_names[p], dims, {}};
            std::size_t n = 1;
            for (auto d : dims) n *= d;
            t.data.assign(n, T(0));
            params.push_back(std::move(t));
        };
        add(char_emb, {C, shape.char_dim});
        add(conv_w, {shape.filters, shape.conv_width * shape.char_dim});
        add(conv_b, {shape.filters});
        add(fwd_w, {4 * H, I + H});
        add(fwd_b, {4 * H});
        add(bwd_w, {4 * H, I + H});
        add(bwd_b, {4 * H});
        add(upos_w, {inventory.upos.size(), 2 * H});
        add(upos_b, {inventory.upos.size()});
        add(feats_w, {inventory.feats.size(), 2 * H});
        add(feats_b, {inventory.feats.size()});

        SplitMix64 rng(seed);
        auto glorot = [&](TaggerParam p) {
            auto& t = params[p];
            const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
            for (auto& x : t.data) x = static_cast<T>(rng.uniform(-limit, limit));
        };
        const double emb_limit = std::sqrt(3.0 / static_cast<double>(shape.char_dim));
        for (auto& x : params[char_emb].data) x = static_cast<T>(rng.uniform(-emb_limit, emb_limit));
        for (auto p : {conv_w, fwd_w, bwd_w, upos_w, feats_w}) glorot(p);
        for (auto p : {fwd_b, bwd_b})
            for (std::size_t j = H; j < 2 * H; ++j) params[p].data[j] = T(1);
    }

    Tensor<T>& operator[](TaggerParam p) { return params[p]; }
    const Tensor<T>& operator[](TaggerParam p) const { return params[p]; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : params) n += t.data.size();
        return n;
    }

    template <typename U>
    TaggerModel<U> cast() const {
        TaggerModel<U> out;
        out.inventory = inventory;
        out.shape = shape;
        for (const auto& t : params) out.params.push_back({t.name, t.shape, {t.data.begin(), t.data.end()}});
        return out;
    }

    bool all_finite() const {
        for (const auto& t : params)
            for (T x : t.data)
                if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    friend bool operator==(const TaggerModel& a, const TaggerModel& b) {
        if (a.params.size() != b.params.size()) return false;
        for (std::size_t k = 0; k < a.params.size(); ++k)
            if (a.params[k].shape != b.params[k].shape || a.params[k].data != b.params[k].data) return false;
        return a.inventory.upos == b.inventory.upos && a.inventory.feats == b.inventory.feats &&
               a.inventory.chars == b.inventory.chars;
    }
};

/// One zero tensor per model parameter.
template <typename T>
using TaggerGradients = std::vector<std::vector<T>>;

template <typename T>
TaggerGradients<T> zero_gradients(const TaggerModel<T>& model) {
    TaggerGradients<T> g;
    for (const auto& t : model.params) g.emplace_back(t.data.size(), T(0));
    return g;
}

/// Word block of a token's input: its vector, else its lowercased form's
/// vector, else zeros. The store is only read.
inline std::vector<double> word_features(const EmbeddingStore& store, const std::string& token) {
    if (auto v = store.vector(token)) return *v;
    if (auto v = store.vector(utf8::lowercase(token))) return *v;
    return std::vector<double>(store.dim(), 0.0);
}

/// A sentence mapped onto model inputs once, reused across epochs.
template <typename T>
struct EncodedSentence {
    std::vector<std::vector<T>> words;               ///< [t][word_dim]
    std::vector<std::vector<std::uint32_t>> chars;   ///< [t][len]
    std::vector<int> upos, feats;                    ///< -1 when outside the inventory
};

template <typename T>
EncodedSentence<T> encode_sentence(const TaggerModel<T>& model, const EmbeddingStore& store,
                                   const ConlluSentence& sentence) {
    EncodedSentence<T> enc;
    for (const auto& tok : sentence.tokens) {
        auto w = word_features(store, tok.form);
        if (w.size() != model.shape.word_dim) throw ArgumentError("embedding dimension does not match the tagger");
        enc.words.emplace_back(w.begin(), w.end());
        std::vector<std::uint32_t> ids;
        for (char32_t c : utf8::decode_all(tok.form)) ids.push_back(model.inventory.char_id(c));
        if (ids.empty()) ids.push_back(0);
        enc.chars.push_back(std::move(ids));
        enc.upos.push_back(model.inventory.upos_id(tok.upos));
        enc.feats.push_back(model.inventory.feats_id(tok.feats));
    }
    return enc;
}

namespace detail {

template <typename T>
T sigm(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
struct LstmTrace {
    std::vector<std::vector<T>> gates; ///< activated i, f, g, o per step
    std::vector<std::vector<T>> c, tc, h;
};

template <typename T>
struct ForwardCache {
    std::vector<std::vector<int>> argmax;  ///< [t][filter] winning position
    std::vector<std::vector<T>> x;         ///< [t][input_dim]
    LstmTrace<T> fwd, bwd;
    std::vector<std::vector<T>> states;    ///< [t][2H] = [forward h; backward h]
    std::vector<std::vector<T>> upos_logits, feats_logits;
};

template <typename T>
void char_features(const TaggerModel<T>& m, std::span<const std::uint32_t> chars, T* out, int* argmax) {
    const auto& emb = m[char_emb];
    const auto& w = m[conv_w];
    const auto& b = m[conv_b];
    const std::size_t F = m.shape.filters, D = m.shape.char_dim, W = m.shape.conv_width;
    const long L = static_cast<long>(chars.size());
    const long off = static_cast<long>((W - 1) / 2);
    for (std::size_t f = 0; f < F; ++f) {
        T best = -std::numeric_limits<T>::infinity();
        int arg = 0;
        const T* filt = w.row(f);
        for (long p = 0; p < L; ++p) {
            T z = b.data[f];
            for (std::size_t k = 0; k < W; ++k) {
                const long q = p + static_cast<long>(k) - off;
                if (q < 0 || q >= L) continue;
                const T* e = emb.row(chars[static_cast<std::size_t>(q)]);
                for (std::size_t d = 0; d < D; ++d) z += filt[k * D + d] * e[d];
            }
            if (z > best) {
                best = z;
                arg = static_cast<int>(p);
            }
        }
        out[f] = best;
        if (argmax) argmax[f] = arg;
    }
}

template <typename T>
void lstm_forward(const Tensor<T>& w, const Tensor<T>& b, const std::vector<std::vector<T>>& x, bool reverse,
                  std::size_t H, LstmTrace<T>& tr) {
    const std::size_t n = x.size(), I = x.front().size();
    tr.gates.assign(n, std::vector<T>(4 * H));
    tr.c.assign(n, std::vector<T>(H));
    tr.tc.assign(n, std::vector<T>(H));
    tr.h.assign(n, std::vector<T>(H));
    std::vector<T> h_prev(H, T(0)), c_prev(H, T(0));
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t t = reverse ? n - 1 - k : k;
        auto& a = tr.gates[t];
        const T* xt = x[t].data();
        for (std::size_t r = 0; r < 4 * H; ++r) {
            const T* row = w.row(r);
            T s = b.data[r];
            for (std::size_t j = 0; j < I; ++j) s += row[j] * xt[j];
            for (std::size_t j = 0; j < H; ++j) s += row[I + j] * h_prev[j];
            a[r] = s;
        }
        for (std::size_t j = 0; j < H; ++j) {
            const T i = sigm(a[j]), f = sigm(a[H + j]), g = std::tanh(a[2 * H + j]), o = sigm(a[3 * H + j]);
            a[j] = i;
            a[H + j] = f;
            a[2 * H + j] = g;
            a[3 * H + j] = o;
            const T c = f * c_prev[j] + i * g;
            tr.c[t][j] = c;
            tr.tc[t][j] = std::tanh(c);
            tr.h[t][j] = o * tr.tc[t][j];
        }
        h_prev = tr.h[t];
        c_prev = tr.c[t];
    }
}

// Accumulates dW, db and, for input columns >= dx_from, dx.
template <typename T>
void lstm_backward(const Tensor<T>& w, const std::vector<std::vector<T>>& x, bool reverse, std::size_t H,
                   const LstmTrace<T>& tr, const std::vector<std::vector<T>>& dh_out, std::size_t dh_offset,
                   std::vector<T>& dw, std::vector<T>& db, std::vector<std::vector<T>>& dx, std::size_t dx_from) {
    const std::size_t n = x.size(), I = x.front().size(), cols = I + H;
    std::vector<T> dh_next(H, T(0)), dc_next(H, T(0)), da(4 * H), zeros(H, T(0));
    for (std::size_t kk = n; kk-- > 0;) {
        const std::size_t t = reverse ? n - 1 - kk : kk;
        const bool first = kk == 0;
        const std::size_t tp = reverse ? t + 1 : t - 1;
        const std::vector<T>& h_prev = first ? zeros : tr.h[tp];
        const std::vector<T>& c_prev = first ? zeros : tr.c[tp];
        const auto& a = tr.gates[t];
        for (std::size_t j = 0; j < H; ++j) {
            const T i = a[j], f = a[H + j], g = a[2 * H + j], o = a[3 * H + j];
            const T tc = tr.tc[t][j];
            const T dh = dh_out[t][dh_offset + j] + dh_next[j];
            const T dc = dh * o * (T(1) - tc * tc) + dc_next[j];
            da[j] = dc * g * i * (T(1) - i);
            da[H + j] = dc * c_prev[j] * f * (T(1) - f);
            da[2 * H + j] = dc * i * (T(1) - g * g);
            da[3 * H + j] = dh * tc * o * (T(1) - o);
            dc_next[j] = dc * f;
        }
        std::fill(dh_next.begin(), dh_next.end(), T(0));
        const T* xt = x[t].data();
        for (std::size_t r = 0; r < 4 * H; ++r) {
            const T d = da[r];
            if (d == T(0)) continue;
            T* gw = dw.data() + r * cols;
            const T* row = w.row(r);
            for (std::size_t j = 0; j < I; ++j) gw[j] += d * xt[j];
            for (std::size_t j = 0; j < H; ++j) gw[I + j] += d * h_prev[j];
            db[r] += d;
            for (std::size_t j = dx_from; j < I; ++j) dx[t][j] += row[j] * d;
            for (std::size_t j = 0; j < H; ++j) dh_next[j] += row[I + j] * d;
        }
    }
}

template <typename T>
void project(const Tensor<T>& w, const Tensor<T>& b, const std::vector<T>& s, std::vector<T>& out) {
    out.assign(w.rows(), T(0));
    for (std::size_t k = 0; k < w.rows(); ++k) {
        const T* row = w.row(k);
        T z = b.data[k];
        for (std::size_t j = 0; j < s.size(); ++j) z += row[j] * s[j];
        out[k] = z;
    }
}

template <typename T>
void run_forward(const TaggerModel<T>& m, const EncodedSentence<T>& sent, ForwardCache<T>& cache) {
    const std::size_t n = sent.words.size(), H = m.shape.hidden, WD = m.shape.word_dim, F = m.shape.filters;
    cache.x.assign(n, std::vector<T>(m.shape.input_dim()));
    cache.argmax.assign(n, std::vector<int>(F));
    for (std::size_t t = 0; t < n; ++t) {
        std::copy(sent.words[t].begin(), sent.words[t].end(), cache.x[t].begin());
        char_features(m, sent.chars[t], cache.x[t].data() + WD, cache.argmax[t].data());
    }
    lstm_forward(m[fwd_w], m[fwd_b], cache.x, false, H, cache.fwd);
    lstm_forward(m[bwd_w], m[bwd_b], cache.x, true, H, cache.bwd);
    cache.states.assign(n, std::vector<T>(2 * H));
    cache.upos_logits.resize(n);
    cache.feats_logits.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        std::copy(cache.fwd.h[t].begin(), cache.fwd.h[t].end(), cache.states[t].begin());
        std::copy(cache.bwd.h[t].begin(), cache.bwd.h[t].end(), cache.states[t].begin() + static_cast<long>(H));
        project(m[upos_w], m[upos_b], cache.states[t], cache.upos_logits[t]);
        project(m[feats_w], m[feats_b], cache.states[t], cache.feats_logits[t]);
    }
}

} // namespace detail

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
    std::vector<T> p(logits.begin(), logits.end());
    if (p.empty()) return p;
    const T mx = *std::max_element(p.begin(), p.end());
    T sum = T(0);
    for (auto& v : p) sum += (v = std::exp(v - mx));
    for (auto& v : p) v /= sum;
    return p;
}

template <typename T>
struct TaggerLogits {
    std::vector<std::vector<T>> upos;  ///< T x |UPOS|
    std::vector<std::vector<T>> feats; ///< T x |FEATS|
};

template <typename T>
TaggerLogits<T> forward(const TaggerModel<T>& model, const EncodedSentence<T>& sentence) {
    if (sentence.words.empty()) throw ArgumentError("cannot tag an empty sentence");
    detail::ForwardCache<T> cache;
    detail::run_forward(model, sentence, cache);
    return {std::move(cache.upos_logits), std::move(cache.feats_logits)};
}

template <typename T>
TaggerLogits<T> forward(const TaggerModel<T>& model, const EmbeddingStore& store, const ConlluSentence& sentence) {
    return forward(model, encode_sentence(model, store, sentence));
}

/// Char-CNN block of a token's input vector.
template <typename T>
std::vector<T> char_block(const TaggerModel<T>& model, const std::string& token) {
    std::vector<std::uint32_t> ids;
    for (char32_t c : utf8::decode_all(token)) ids.push_back(model.inventory.char_id(c));
    if (ids.empty()) ids.push_back(0);
    std::vector<T> out(model.shape.filters);
    detail::char_features(model, std::span<const std::uint32_t>(ids), out.data(), nullptr);
    return out;
}

/// [word vector | char features] as fed to the BiLSTM.
template <typename T>
std::vector<T> token_features(const TaggerModel<T>& model, const EmbeddingStore& store, const std::string& token) {
    auto w = word_features(store, token);
    std::vector<T> out(w.begin(), w.end());
    auto c = char_block(model, token);
    out.insert(out.end(), c.begin(), c.end());
    return out;
}

/// Mean over tokens of CE(UPOS) + CE(FEATS); gradients are accumulated into
/// `grads`, which must match the model. Word vectors receive no gradient.
template <typename T>
T loss_and_gradients(const TaggerModel<T>& m, const EncodedSentence<T>& sent, TaggerGradients<T>& grads) {
    const std::size_t n = sent.words.size(), H = m.shape.hidden, WD = m.shape.word_dim, F = m.shape.filters;
    if (n == 0) throw ArgumentError("cannot train on an empty sentence");
    for (std::size_t t = 0; t < n; ++t)
        if (sent.upos[t] < 0 || sent.feats[t] < 0) throw DataError("gold tag outside the training inventory");
    detail::ForwardCache<T> cache;
    detail::run_forward(m, sent, cache);

    const T inv_n = T(1) / static_cast<T>(n);
    T loss = T(0);
    std::vector<std::vector<T>> ds(n, std::vector<T>(2 * H, T(0)));
    auto head = [&](const std::vector<std::vector<T>>& logits, const std::vector<int>& gold, TaggerParam wp,
                    TaggerParam bp) {
        const auto& w = m[wp];
        auto& gw = grads[wp];
        auto& gb = grads[bp];
        for (std::size_t t = 0; t < n; ++t) {
            auto p = softmax<T>(logits[t]);
            loss -= std::log(std::max(p[static_cast<std::size_t>(gold[t])], std::numeric_limits<T>::min())) * inv_n;
            p[static_cast<std::size_t>(gold[t])] -= T(1);
            for (std::size_t k = 0; k < p.size(); ++k) {
                const T d = p[k] * inv_n;
                gb[k] += d;
                T* gr = gw.data() + k * 2 * H;
                const T* row = w.row(k);
                for (std::size_t j = 0; j < 2 * H; ++j) {
                    gr[j] += d * cache.states[t][j];
                    ds[t][j] += d * row[j];
                }
            }
        }
    };
    head(cache.upos_logits, sent.upos, upos_w, upos_b);
    head(cache.feats_logits, sent.feats, feats_w, feats_b);

    std::vector<std::vector<T>> dx(n, std::vector<T>(m.shape.input_dim(), T(0)));
    detail::lstm_backward(m[fwd_w], cache.x, false, H, cache.fwd, ds, 0, grads[fwd_w], grads[fwd_b], dx, WD);
    detail::lstm_backward(m[bwd_w], cache.x, true, H, cache.bwd, ds, H, grads[bwd_w], grads[bwd_b], dx, WD);

    // Max-pooled convolution: only the winning position of each filter.
    const std::size_t D = m.shape.char_dim, W = m.shape.conv_width;
    const long off = static_cast<long>((W - 1) / 2);
    const auto& emb = m[char_emb];
    const auto& cw = m[conv_w];
    for (std::size_t t = 0; t < n; ++t) {
        const auto& chars = sent.chars[t];
        const long L = static_cast<long>(chars.size());
        for (std::size_t f = 0; f < F; ++f) {
            const T d = dx[t][WD + f];
            if (d == T(0)) continue;
            grads[conv_b][f] += d;
            const long p = cache.argmax[t][f];
            for (std::size_t k = 0; k < W; ++k) {
                const long q = p + static_cast<long>(k) - off;
                if (q < 0 || q >= L) continue;
                const std::uint32_t c = chars[static_cast<std::size_t>(q)];
                const T* e = emb.row(c);
                const T* filt = cw.row(f);
                T* gfilt = grads[conv_w].data() + f * W * D;
                T* ge = grads[char_emb].data() + c * D;
                for (std::size_t dd = 0; dd < D; ++dd) {
                    gfilt[k * D + dd] += d * e[dd];
                    ge[dd] += d * filt[k * D + dd];
                }
            }
        }
    }
    return loss;
}

template <typename T>
T sentence_loss(const TaggerModel<T>& m, const EncodedSentence<T>& sent) {
    auto grads = zero_gradients(m);
    return loss_and_gradients(m, sent, grads);
}

/// Plain SGD step with optional global-norm clipping.
template <typename T>
void sgd_step(TaggerModel<T>& m, const TaggerGradients<T>& grads, double lr, double clip_norm) {
    double scale = 1.0;
    if (clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& g : grads)
            for (T v : g) sq += static_cast<double>(v) * static_cast<double>(v);
        const double nrm = std::sqrt(sq);
        if (nrm > clip_norm) scale = clip_norm / nrm;
    }
    const T step = static_cast<T>(lr * scale);
    for (std::size_t k = 0; k < grads.size(); ++k) {
        auto& p = m.params[k].data;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= step * grads[k][i];
    }
}

// ---------------------------------------------------------------------------
// Evaluation and training

struct TagScores {
    double upos = 0.0;
    double feats = 0.0;
    std::size_t tokens = 0;

    double mean() const { return 0.5 * (upos + feats); }
};

template <typename T>
struct PredictedTags {
    std::vector<int> upos, feats;
};

template <typename T>
PredictedTags<T> predict_tags(const TaggerModel<T>& m, const EncodedSentence<T>& sent) {
    auto logits = forward(m, sent);
    PredictedTags<T> out;
    auto argmax = [](const std::vector<T>& v) {
        return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
    };
    for (const auto& l : logits.upos) out.upos.push_back(argmax(l));
    for (const auto& l : logits.feats) out.feats.push_back(argmax(l));
    return out;
}

/// Token-level accuracy; FEATS needs an exact match of the whole string.
/// Gold tags unknown to the model always count as wrong.
template <typename T>
TagScores score_encoded(const TaggerModel<T>& m, std::span<const EncodedSentence<T>> sentences) {
    std::size_t tokens = 0, upos_ok = 0, feats_ok = 0;
    for (const auto& s : sentences) {
        if (s.words.empty()) continue;
        auto pred = predict_tags(m, s);
        for (std::size_t t = 0; t < s.words.size(); ++t) {
            ++tokens;
            upos_ok += s.upos[t] >= 0 && pred.upos[t] == s.upos[t];
            feats_ok += s.feats[t] >= 0 && pred.feats[t] == s.feats[t];
        }
    }
    TagScores sc;
    sc.tokens = tokens;
    if (tokens > 0) {
        sc.upos = static_cast<double>(upos_ok) / static_cast<double>(tokens);
        sc.feats = static_cast<double>(feats_ok) / static_cast<double>(tokens);
    }
    return sc;
}

template <typename T>
std::vector<EncodedSentence<T>> encode_all(const TaggerModel<T>& m, const EmbeddingStore& store,
                                           std::span<const ConlluSentence> sentences) {
    std::vector<EncodedSentence<T>> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences)
        if (!s.tokens.empty()) out.push_back(encode_sentence(m, store, s));
    return out;
}

template <typename T>
TagScores evaluate_tagger(const TaggerModel<T>& m, const EmbeddingStore& store,
                          std::span<const ConlluSentence> sentences) {
    auto enc = encode_all(m, store, sentences);
    return score_encoded<T>(m, enc);
}

struct EpochLog {
    int epoch = 0;
    double learning_rate = 0.0;
    double train_loss = 0.0; ///< mean sentence loss over the epoch
    TagScores dev;
};

template <typename T>
struct FitResult {
    TaggerModel<T> model; ///< parameters of the best dev epoch
    int best_epoch = -1;
    TagScores dev;
    std::vector<EpochLog> log;
};

inline TaggerShape shape_for(const TaggerConfig& cfg, std::size_t word_dim) {
    return {word_dim, static_cast<std::size_t>(cfg.char_emb_dim), static_cast<std::size_t>(cfg.char_conv_width),
            static_cast<std::size_t>(cfg.char_filters), static_cast<std::size_t>(cfg.lstm_hidden)};
}

/// SGD over `train` (one sentence per step, shuffled each epoch), selecting the
/// epoch with the best mean dev accuracy; earlier epochs win ties. An empty
/// dev set selects the last epoch.
template <typename T>
FitResult<T> fit_tagger(std::span<const ConlluSentence> train, std::span<const ConlluSentence> dev,
                        const EmbeddingStore& store, const TaggerConfig& cfg, const TagInventory& inventory,
                        std::uint64_t seed) {
    FitResult<T> res{TaggerModel<T>(inventory, shape_for(cfg, store.dim()), derive_seed(seed, 1)), -1, {}, {}};
    TaggerModel<T> model = res.model;
    auto train_enc = encode_all(model, store, train);
    auto dev_enc = encode_all(model, store, dev);
    if (train_enc.empty()) throw ArgumentError("training set has no sentences");
    std::vector<std::size_t> order(train_enc.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(derive_seed(seed, 2));
    auto grads = zero_gradients(model);
    double best = -1.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate(epoch);
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        for (auto idx : order) {
            for (auto& g : grads) std::fill(g.begin(), g.end(), T(0));
            loss_sum += static_cast<double>(loss_and_gradients(model, train_enc[idx], grads));
            sgd_step(model, grads, lr, cfg.clip_norm);
        }
        if (!model.all_finite()) throw DataError("tagger diverged at epoch " + std::to_string(epoch));
        EpochLog entry{epoch, lr, loss_sum / static_cast<double>(order.size()), score_encoded<T>(model, dev_enc)};
        res.log.push_back(entry);
        const double metric = dev_enc.empty() ? static_cast<double>(epoch) : entry.dev.mean();
        if (metric > best) {
            best = metric;
            res.best_epoch = epoch;
            res.dev = entry.dev;
            res.model = model;
        }
    }
    return res;
}

struct SeedResult {
    std::uint64_t seed = 0;
    int best_epoch = -1;
    TagScores dev;
    std::optional<TagScores> test;
    std::vector<EpochLog> log;
};

struct TagReport {
    std::vector<SeedResult> seeds;
    TagScores dev_mean;
    std::optional<TagScores> test_mean;
    nlohmann::json config = nlohmann::json::object();

    void average() {
        dev_mean = {};
        test_mean.reset();
        if (seeds.empty()) return;
        TagScores test_sum;
        bool have_test = true;
        for (const auto& s : seeds) {
            dev_mean.upos += s.dev.upos;
            dev_mean.feats += s.dev.feats;
            dev_mean.tokens = s.dev.tokens;
            if (s.test) {
                test_sum.upos += s.test->upos;
                test_sum.feats += s.test->feats;
                test_sum.tokens = s.test->tokens;
            } else {
                have_test = false;
            }
        }
        const auto n = static_cast<double>(seeds.size());
        dev_mean.upos /= n;
        dev_mean.feats /= n;
        if (have_test) {
            test_sum.upos /= n;
            test_sum.feats /= n;
            test_mean = test_sum;
        }
    }

    nlohmann::json to_json() const {
        auto scores = [](const TagScores& s) {
            return nlohmann::json{{"upos", s.upos}, {"feats", s.feats}, {"tokens", s.tokens}};
        };
        nlohmann::json j;
        j["config"] = config;
        auto& arr = j["seeds"] = nlohmann::json::array();
        for (const auto& s : seeds) {
            nlohmann::json e{{"seed", s.seed}, {"best_epoch", s.best_epoch}, {"dev", scores(s.dev)}};
            e["test"] = s.test ? scores(*s.test) : nlohmann::json(nullptr);
            auto& log = e["epochs"] = nlohmann::json::array();
            for (const auto& l : s.log)
                log.push_back({{"epoch", l.epoch},
                               {"learning_rate", l.learning_rate},
                               {"train_loss", l.train_loss},
                               {"dev_upos", l.dev.upos},
                               {"dev_feats", l.dev.feats}});
            arr.push_back(std::move(e));
        }
        j["average"] = {{"dev", scores(dev_mean)}, {"test", test_mean ? scores(*test_mean) : nlohmann::json(nullptr)}};
        return j;
    }

    std::string to_table() const {
        std::string out;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-10s %10s %10s %10s %10s %6s\n", "seed", "dev UPOS", "dev FEATS", "test UPOS",
                      "test FEATS", "epoch");
        out += buf;
        auto pct = [](std::optional<double> v) {
            char b[32];
            if (!v) return std::string("n/a");
            std::snprintf(b, sizeof b, "%.2f%%", *v * 100);
            return std::string(b);
        };
        for (const auto& s : seeds) {
            std::snprintf(buf, sizeof buf, "%-10llu %10s %10s %10s %10s %6d\n", static_cast<unsigned long long>(s.seed),
                          pct(s.dev.upos).c_str(), pct(s.dev.feats).c_str(),
                          pct(s.test ? std::optional(s.test->upos) : std::nullopt).c_str(),
                          pct(s.test ? std::optional(s.test->feats) : std::nullopt).c_str(), s.best_epoch);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "%-10s %10s %10s %10s %10s\n", "average", pct(dev_mean.upos).c_str(),
                      pct(dev_mean.feats).c_str(),
                      pct(test_mean ? std::optional(test_mean->upos) : std::nullopt).c_str(),
                      pct(test_mean ? std::optional(test_mean->feats) : std::nullopt).c_str());
        out += buf;
        return out;
    }
};

struct TaggerRun {
    std::vector<TaggerModel<float>> models; ///< selected model per seed
    TagReport report;
};

inline nlohmann::json describe(const TaggerConfig& cfg) {
    return {{"lr0", cfg.lr0},
            {"decay", cfg.decay},
            {"epochs", cfg.epochs},
            {"dev_fraction", cfg.dev_fraction},
            {"seeds", cfg.seeds},
            {"char_emb_dim", cfg.char_emb_dim},
            {"char_conv_width", cfg.char_conv_width},
            {"char_filters", cfg.char_filters},
            {"lstm_hidden", cfg.lstm_hidden},
            {"clip_norm", cfg.clip_norm}};
}

/// Per seed: hold out dev_fraction of `train`, fit, keep the best dev epoch.
/// When `test` is given each selected model is also scored on it. Seeds may
/// run on parallel workers; results do not depend on the worker count.
inline TaggerRun train_tagger(std::span<const ConlluSentence> train, const EmbeddingStore& store,
                              const TaggerConfig& cfg, std::span<const ConlluSentence> test = {}) {
    cfg.validate();
    if (train.empty()) throw ArgumentError("training treebank is empty");
    const auto inventory = TagInventory::from(train);
    TaggerRun run;
    run.models.resize(cfg.seeds.size());
    run.report.seeds.resize(cfg.seeds.size());
    auto one = [&](std::size_t k) {
        const auto seed = cfg.seeds[k];
        auto [fit_part, dev_part] = split_random(train, cfg.dev_fraction, seed);
        auto fit = fit_tagger<float>(fit_part, dev_part, store, cfg, inventory, seed);
        SeedResult r{seed, fit.best_epoch, fit.dev, std::nullopt, std::move(fit.log)};
        if (!test.empty()) r.test = evaluate_tagger(fit.model, store, test);
        run.report.seeds[k] = std::move(r);
        run.models[k] = std::move(fit.model);
    };
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), cfg.seeds.size());
    if (workers <= 1) {
        for (std::size_t k = 0; k < cfg.seeds.size(); ++k) one(k);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t k = w; k < cfg.seeds.size(); k += workers) one(k);
            });
        for (auto& t : pool) t.join();
    }
    run.report.average();
    run.report.config = describe(cfg);
    return run;
}

// ---------------------------------------------------------------------------
// Checkpoints: "WBTG" | u32 version=1 | u32 header bytes | JSON header |
// f32 tensors in header order, little-endian.

inline constexpr std::array<char, 4> tagger_magic{'W', 'B', 'T', 'G'};

template <typename T>
void write_tagger(std::ostream& out, const TaggerModel<T>& m) {
    nlohmann::json h;
    h["shape"] = {{"word_dim", m.shape.word_dim},
                  {"char_dim", m.shape.char_dim},
                  {"conv_width", m.shape.conv_width},
                  {"filters", m.shape.filters},
                  {"hidden", m.shape.hidden}};
    h["upos"] = m.inventory.upos;
    h["feats"] = m.inventory.feats;
    std::vector<std::uint32_t> chars(m.inventory.chars.begin(), m.inventory.chars.end());
    h["chars"] = chars;
    auto& tensors = h["tensors"] = nlohmann::json::array();
    for (const auto& t : m.params) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    const std::string header = h.dump();
    out.write(tagger_magic.data(), 4);
    detail::put_le<std::uint32_t>(out, 1);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& t : m.params)
        for (T x : t.data) detail::put_le<float>(out, static_cast<float>(x));
}

inline TaggerModel<float> read_tagger(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || magic != tagger_magic) throw FormatError("not a tagger checkpoint");
    if (detail::get_le<std::uint32_t>(in) != 1) throw FormatError("unsupported tagger checkpoint version");
    const auto len = detail::get_le<std::uint32_t>(in);
    std::string header(len, '\0');
    if (!in.read(header.data(), len)) throw FormatError("truncated tagger checkpoint");
    TaggerModel<float> m;
    try {
        auto h = nlohmann::json::parse(header);
        const auto& s = h.at("shape");
        m.shape = {s.at("word_dim"), s.at("char_dim"), s.at("conv_width"), s.at("filters"), s.at("hidden")};
        m.inventory.upos = h.at("upos").get<std::vector<std::string>>();
        m.inventory.feats = h.at("feats").get<std::vector<std::string>>();
        for (auto c : h.at("chars").get<std::vector<std::uint32_t>>()) m.inventory.chars.push_back(c);
        m.inventory.reindex();
        for (const auto& t : h.at("tensors")) {
            Tensor<float> tensor{t.at("name"), t.at("shape").get<std::vector<std::size_t>>(), {}};
            std::size_t n = 1;
            for (auto d : tensor.shape) n *= d;
            tensor.data.reserve(n);
            for (std::size_t k = 0; k < n; ++k) tensor.data.push_back(detail::get_le<float>(in));
            m.params.push_back(std::move(tensor));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad tagger checkpoint header: ") + e.what());
    }
    if (m.params.size() != tagger_param_count) throw FormatError("tagger checkpoint has wrong tensor count");
    return m;
}

template <typename T>
void save_tagger(const TaggerModel<T>& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    write_tagger(out, m);
}

inline TaggerModel<float> load_tagger(const std::string& path) {
    auto in = detail::open_input(path);
    return read_tagger(in);
}

} // namespace wordbench
