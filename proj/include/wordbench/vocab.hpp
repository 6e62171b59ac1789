#pragma once

// Vocabulary, character n-gram hashing and the negative-sampling table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "utf8.hpp"

namespace wordbench {

/// Words with their corpus counts, ids dense and ordered by descending count
/// (ties: lexicographic byte order).
class Vocabulary {
public:
    struct Entry {
        std::string word;
        std::uint64_t count = 0;
    };

    Vocabulary() = default;

    /// Entries must already be in id order.
    explicit Vocabulary(std::vector<Entry> entries) : entries_(std::move(entries)) {
        index_.reserve(entries_.size());
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            auto [it, fresh] = index_.emplace(entries_[i].word, static_cast<std::uint32_t>(i));
            if (!fresh) throw DataError("duplicate vocabulary word '" + entries_[i].word + "'");
            total_ += entries_[i].count;
        }
    }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::string& word(std::uint32_t id) const { return entries_.at(id).word; }
    std::uint64_t count(std::uint32_t id) const { return entries_.at(id).count; }
    std::uint64_t total_count() const noexcept { return total_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    std::optional<std::uint32_t> id(std::string_view word) const {
        auto it = index_.find(std::string(word));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    bool contains(std::string_view word) const { return id(word).has_value(); }

    std::vector<std::string> words() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.push_back(e.word);
        return out;
    }

    /// Maps a document onto ids, dropping out-of-vocabulary tokens.
    std::vector<std::uint32_t> encode(const Document& doc) const {
        std::vector<std::uint32_t> ids;
        ids.reserve(doc.tokens.size());
        for (const auto& t : doc.tokens)
            if (auto i = id(t)) ids.push_back(*i);
        return ids;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::uint64_t total_ = 0;
};

namespace detail {
inline Vocabulary finish_vocab(const std::unordered_map<std::string, std::uint64_t>& counts,
                               std::uint64_t min_count) {
    std::vector<Vocabulary::Entry> entries;
    for (const auto& [w, c] : counts)
        if (c >= min_count) entries.push_back({w, c});
    if (entries.empty()) throw DataError("vocabulary is empty after applying min_count");
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        return a.count != b.count ? a.count > b.count : a.word < b.word;
    });
    return Vocabulary(std::move(entries));
}
} // namespace detail

inline Vocabulary build_vocab(std::span<const std::string> tokens, std::uint64_t min_count) {
    std::unordered_map<std::string, std::uint64_t> counts;
    for (const auto& t : tokens) ++counts[t];
    return detail::finish_vocab(counts, min_count);
}

inline Vocabulary build_vocab(std::span<const Document> docs, std::uint64_t min_count) {
    std::unordered_map<std::string, std::uint64_t> counts;
    for (const auto& d : docs)
        for (const auto& t : d.tokens) ++counts[t];
    return detail::finish_vocab(counts, min_count);
}

inline Vocabulary build_vocab(const std::vector<std::string>& tokens, std::uint64_t min_count) {
    return build_vocab(std::span<const std::string>(tokens), min_count);
}

inline Vocabulary build_vocab(const std::vector<Document>& docs, std::uint64_t min_count) {
    return build_vocab(std::span<const Document>(docs), min_count);
}

/// "word<TAB>count" per line, in id order.
inline void write_vocab(std::ostream& out, const Vocabulary& vocab) {
    for (const auto& e : vocab.entries()) out << e.word << '\t' << e.count << '\n';
}

inline Vocabulary read_vocab(std::istream& in) {
    std::vector<Vocabulary::Entry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) throw ParseError("expected word<TAB>count", lineno);
        try {
            std::size_t used = 0;
            auto count = std::stoull(line.substr(tab + 1), &used);
            if (used != line.size() - tab - 1) throw ParseError("bad count", lineno);
            entries.push_back({line.substr(0, tab), count});
        } catch (const std::logic_error&) {
            throw ParseError("bad count", lineno);
        }
    }
    try {
        return Vocabulary(std::move(entries));
    } catch (const DataError& e) {
        throw ParseError(e.what());
    }
}

// ---------------------------------------------------------------------------
// Character n-grams

struct SubwordIndexer {
    int min_n = 3;
    int max_n = 3;
    std::uint32_t bucket_count = 2'000'000;

    void validate() const {
        if (min_n < 1 || max_n < min_n) throw ArgumentError("n-gram bounds must satisfy 1 <= min_n <= max_n");
        if (bucket_count == 0) throw ArgumentError("bucket_count must be positive");
    }

    friend bool operator==(const SubwordIndexer&, const SubwordIndexer&) = default;
};

/// N-grams of "<word>" over code points, grouped by length (shortest first),
/// left to right within a length. A marked form shorter than min_n is returned
/// whole so no word ends up without subwords.
inline std::vector<std::string> extract_ngrams(std::string_view word, const SubwordIndexer& indexer) {
    std::u32string marked = U"<" + utf8::decode_all(word) + U">";
    const auto len = static_cast<int>(marked.size());
    std::vector<std::string> grams;
    if (len < indexer.min_n) {
        grams.push_back(utf8::encode(marked));
        return grams;
    }
    for (int n = indexer.min_n; n <= std::min(indexer.max_n, len); ++n)
        for (int start = 0; start + n <= len; ++start)
            grams.push_back(utf8::encode(std::u32string_view(marked).substr(start, n)));
    return grams;
}

inline std::uint32_t fnv1a32(std::string_view bytes) noexcept {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

inline std::uint32_t ngram_bucket(std::string_view ngram, std::uint32_t bucket_count) {
    if (bucket_count == 0) throw ArgumentError("bucket_count must be positive");
    return fnv1a32(ngram) % bucket_count;
}

inline std::vector<std::uint32_t> ngram_buckets(std::string_view word, const SubwordIndexer& indexer) {
    std::vector<std::uint32_t> out;
    for (const auto& g : extract_ngrams(word, indexer)) out.push_back(ngram_bucket(g, indexer.bucket_count));
    return out;
}

// ---------------------------------------------------------------------------
// Negative sampling

/// Draws ids with probability proportional to count^power by binary search
/// over the cumulative mass. Draw state lives in the caller's generator.
class NegativeSampler {
public:
    NegativeSampler(const Vocabulary& vocab, double power = 0.75) {
        if (vocab.empty()) throw ArgumentError("negative sampler needs a non-empty vocabulary");
        cumulative_.reserve(vocab.size());
        double acc = 0.0;
        for (const auto& e : vocab.entries()) {
            acc += std::pow(static_cast<double>(e.count), power);
            cumulative_.push_back(acc);
        }
        if (!(acc > 0.0)) throw DataError("negative sampler has zero total mass");
    }

    std::uint32_t draw(SplitMix64& rng) const noexcept {
        double u = rng.uniform() * cumulative_.back();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        if (it == cumulative_.end()) --it;
        return static_cast<std::uint32_t>(it - cumulative_.begin());
    }

    double probability(std::uint32_t id) const {
        double lo = id == 0 ? 0.0 : cumulative_.at(id - 1);
        return (cumulative_.at(id) - lo) / cumulative_.back();
    }

    double mass(std::uint32_t id) const { return cumulative_.at(id) - (id == 0 ? 0.0 : cumulative_.at(id - 1)); }

    std::size_t size() const noexcept { return cumulative_.size(); }

private:
    std::vector<double> cumulative_;
};

inline NegativeSampler build_negative_sampler(const Vocabulary& vocab, double power = 0.75) {
    return NegativeSampler(vocab, power);
}

} // namespace wordbench
