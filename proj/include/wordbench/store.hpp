#pragma once

// Immutable word-vector tables with optional hashed subword buckets.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "error.hpp"
#include "vocab.hpp"

namespace wordbench {

struct Neighbor {
    std::string word;
    std::uint32_t id = 0;
    double similarity = 0.0;
};

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> v) noexcept { return std::sqrt(dot(v, v)); }

/// u.v / (|u| |v|); throws when either vector is zero.
inline double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ArgumentError("cosine: dimension mismatch");
    double nu = norm(u), nv = norm(v);
    if (nu == 0.0 || nv == 0.0) throw ArgumentError("cosine similarity undefined for a zero vector");
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

class EmbeddingStore {
public:
    struct Subwords {
        SubwordIndexer indexer;
        std::vector<double> buckets; // bucket_count x dim

        friend bool operator==(const Subwords&, const Subwords&) = default;
    };

    EmbeddingStore() = default;

    EmbeddingStore(std::vector<std::string> words, std::size_t dim, std::vector<double> rows,
                   std::optional<Subwords> subwords = std::nullopt)
        : words_(std::move(words)), dim_(dim), rows_(std::move(rows)), subwords_(std::move(subwords)) {
        if (dim_ == 0) throw ArgumentError("embedding dimension must be positive");
        if (rows_.size() != words_.size() * dim_) throw ArgumentError("row matrix does not match V x dim");
        if (subwords_) {
            subwords_->indexer.validate();
            if (subwords_->buckets.size() != std::size_t{subwords_->indexer.bucket_count} * dim_)
                throw ArgumentError("bucket matrix does not match B x dim");
            for (double x : subwords_->buckets)
                if (!std::isfinite(x)) throw DataError("non-finite value in bucket table");
        }
        index_.reserve(words_.size());
        for (std::size_t i = 0; i < words_.size(); ++i)
            if (!index_.emplace(words_[i], static_cast<std::uint32_t>(i)).second)
                throw DataError("duplicate word '" + words_[i] + "'");
        for (double x : rows_)
            if (!std::isfinite(x)) throw DataError("non-finite value in word table");
        normalize_rows();
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return words_.size(); }
    bool has_subwords() const noexcept { return subwords_.has_value(); }
    const std::optional<Subwords>& subwords() const noexcept { return subwords_; }
    const std::vector<std::string>& words() const noexcept { return words_; }
    const std::string& word(std::uint32_t id) const { return words_.at(id); }
    const std::vector<double>& table() const noexcept { return rows_; }

    std::optional<std::uint32_t> id(std::string_view word) const {
        auto it = index_.find(std::string(word));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::span<const double> row(std::uint32_t id) const { return {rows_.data() + std::size_t{id} * dim_, dim_}; }

    /// Unit-length copy of a row (all zeros for a zero row).
    std::span<const double> unit_row(std::uint32_t id) const {
        return {unit_.data() + std::size_t{id} * dim_, dim_};
    }

    std::span<const double> bucket_row(std::uint32_t bucket) const {
        return {subwords_->buckets.data() + std::size_t{bucket} * dim_, dim_};
    }

    /// Plain store: the word's row. Subword store: mean of the word row (when
    /// in vocabulary) and its n-gram bucket rows. Absent for OOV words of a
    /// plain store.
    std::optional<std::vector<double>> vector(std::string_view word) const {
        auto wid = id(word);
        if (!subwords_) {
            if (!wid) return std::nullopt;
            auto r = row(*wid);
            return std::vector<double>(r.begin(), r.end());
        }
        if (word.empty()) return std::nullopt;
        std::vector<double> sum(dim_, 0.0);
        std::size_t n = 0;
        auto add = [&](std::span<const double> r) {
            for (std::size_t d = 0; d < dim_; ++d) sum[d] += r[d];
            ++n;
        };
        if (wid) add(row(*wid));
        for (auto b : ngram_buckets(word, subwords_->indexer)) add(bucket_row(b));
        for (auto& x : sum) x /= static_cast<double>(n);
        return sum;
    }

    /// Top-k vocabulary words by cosine to `query`, descending, ties by id.
    /// Zero rows are never returned.
    std::vector<Neighbor> nearest(std::span<const double> query, long k,
                                  const std::unordered_set<std::string>& exclude = {}) const {
        if (k < 0) throw ArgumentError("k must be non-negative");
        if (query.size() != dim_) throw ArgumentError("query dimension mismatch");
        if (k == 0) return {};
        double qn = norm(query);
        if (qn == 0.0) throw ArgumentError("cosine similarity undefined for a zero query");
        std::unordered_set<std::uint32_t> banned;
        for (const auto& w : exclude)
            if (auto i = id(w)) banned.insert(*i);

        struct Cand {
            double sim;
            std::uint32_t id;
        };
        auto better = [](const Cand& a, const Cand& b) { return a.sim != b.sim ? a.sim > b.sim : a.id < b.id; };
        std::vector<Cand> heap; // worst candidate at front
        auto limit = static_cast<std::size_t>(k);
        heap.reserve(std::min(limit, words_.size()) + 1);
        for (std::uint32_t i = 0; i < words_.size(); ++i) {
            if (zero_row_[i] || banned.contains(i)) continue;
            Cand c{dot(unit_row(i), query) / qn, i};
            if (heap.size() < limit) {
                heap.push_back(c);
                std::push_heap(heap.begin(), heap.end(), better);
            } else if (better(c, heap.front())) {
                std::pop_heap(heap.begin(), heap.end(), better);
                heap.back() = c;
                std::push_heap(heap.begin(), heap.end(), better);
            }
        }
        std::sort(heap.begin(), heap.end(), better);
        std::vector<Neighbor> out;
        out.reserve(heap.size());
        for (const auto& c : heap) out.push_back({words_[c.id], c.id, std::clamp(c.sim, -1.0, 1.0)});
        return out;
    }

    /// First n words in id order; the subword table is kept whole.
    EmbeddingStore restrict_vocab(std::size_t n) const {
        if (n == 0) throw ArgumentError("restrict_vocab needs n >= 1");
        if (n >= words_.size()) return *this;
        std::vector<std::string> words(words_.begin(), words_.begin() + static_cast<std::ptrdiff_t>(n));
        std::vector<double> rows(rows_.begin(), rows_.begin() + static_cast<std::ptrdiff_t>(n * dim_));
        return EmbeddingStore(std::move(words), dim_, std::move(rows), subwords_);
    }

    /// Bit-level equality of words, rows and subword tables.
    friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
        auto bits_equal = [](const std::vector<double>& x, const std::vector<double>& y) {
            return x.size() == y.size() && (x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);
        };
        if (a.dim_ != b.dim_ || a.words_ != b.words_ || !bits_equal(a.rows_, b.rows_)) return false;
        if (a.subwords_.has_value() != b.subwords_.has_value()) return false;
        return !a.subwords_ || (a.subwords_->indexer == b.subwords_->indexer &&
                                bits_equal(a.subwords_->buckets, b.subwords_->buckets));
    }

private:
    void normalize_rows() {
        unit_.assign(rows_.size(), 0.0);
        zero_row_.assign(words_.size(), false);
        for (std::size_t i = 0; i < words_.size(); ++i) {
            auto r = row(static_cast<std::uint32_t>(i));
            double n = norm(r);
            if (n == 0.0) {
                zero_row_[i] = true;
                continue;
            }
            for (std::size_t d = 0; d < dim_; ++d) unit_[i * dim_ + d] = r[d] / n;
        }
    }

    std::vector<std::string> words_;
    std::size_t dim_ = 0;
    std::vector<double> rows_;
    std::optional<Subwords> subwords_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::vector<double> unit_;
    std::vector<bool> zero_row_;
};

// ---------------------------------------------------------------------------
// Text format: "V dim" header, then "word v1 ... vdim" with 6 decimals.

inline void write_text(std::ostream& out, const EmbeddingStore& store) {
    if (store.has_subwords()) throw ArgumentError("text format cannot carry a subword table; use binary");
    out << store.size() << ' ' << store.dim() << '\n';
    char buf[64];
    for (std::uint32_t i = 0; i < store.size(); ++i) {
        out << store.word(i);
        for (double x : store.row(i)) {
            std::snprintf(buf, sizeof buf, " %.6f", x);
            out << buf;
        }
        out << '\n';
    }
}

inline EmbeddingStore read_text(std::istream& in) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw ParseError("missing header", 1);
    detail::strip_cr(line);
    std::size_t count = 0, dim = 0;
    {
        std::istringstream hs(line);
        std::string extra;
        if (!(hs >> count >> dim) || (hs >> extra) || dim == 0) throw ParseError("header must be 'V dim'", 1);
    }
    std::vector<std::string> words;
    std::vector<double> rows;
    words.reserve(count);
    rows.reserve(count * dim);
    std::unordered_set<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.empty()) continue;
        if (words.size() == count) throw ParseError("more rows than the header declares", lineno);
        const char* p = line.c_str();
        const char* end = p + line.size();
        const char* sp = std::find(p, end, ' ');
        std::string word(p, sp);
        if (word.empty()) throw ParseError("empty word", lineno);
        if (!seen.insert(word).second) throw ParseError("duplicate word '" + word + "'", lineno);
        std::size_t got = 0;
        p = sp;
        while (p < end) {
            while (p < end && *p == ' ') ++p;
            if (p == end) break;
            char* next = nullptr;
            double v = std::strtod(p, &next);
            if (next == p || !std::isfinite(v)) throw ParseError("bad number", lineno);
            if (++got > dim) break;
            rows.push_back(v);
            p = next;
        }
        if (got != dim)
            throw ParseError("expected " + std::to_string(dim) + " values, found " + std::to_string(got), lineno);
        words.push_back(std::move(word));
    }
    if (words.size() != count)
        throw ParseError("header declares " + std::to_string(count) + " words but file has " +
                         std::to_string(words.size()), lineno);
    return EmbeddingStore(std::move(words), dim, std::move(rows));
}

// ---------------------------------------------------------------------------
// Binary format (little-endian):
//   "EMBW" | u32 version=1 | u32 dim | u32 V | u32 B | u8 min_n | u8 max_n
//   V x (u16 byte length, UTF-8 bytes, dim x f32) | B x dim x f32

inline constexpr std::array<char, 4> binary_magic{'E', 'M', 'B', 'W'};
inline constexpr std::uint32_t binary_version = 1;

namespace detail {
template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
        std::reverse(bytes.begin(), bytes.end());
        out.write(bytes.data(), sizeof(T));
    } else {
        out.write(reinterpret_cast<const char*>(&value), sizeof(T));
    }
}

template <typename T>
T get_le(std::istream& in) {
    std::array<char, sizeof(T)> bytes{};
    if (!in.read(bytes.data(), sizeof(T))) throw FormatError("truncated binary file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}
} // namespace detail

inline void write_binary(std::ostream& out, const EmbeddingStore& store) {
    const auto& sw = store.subwords();
    out.write(binary_magic.data(), 4);
    detail::put_le<std::uint32_t>(out, binary_version);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
    detail::put_le<std::uint32_t>(out, sw ? sw->indexer.bucket_count : 0u);
    detail::put_le<std::uint8_t>(out, sw ? static_cast<std::uint8_t>(sw->indexer.min_n) : 0);
    detail::put_le<std::uint8_t>(out, sw ? static_cast<std::uint8_t>(sw->indexer.max_n) : 0);
    for (std::uint32_t i = 0; i < store.size(); ++i) {
        const auto& w = store.word(i);
        if (w.size() > 0xFFFF) throw ArgumentError("word longer than 65535 bytes");
        detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(w.size()));
        out.write(w.data(), static_cast<std::streamsize>(w.size()));
        for (double x : store.row(i)) detail::put_le<float>(out, static_cast<float>(x));
    }
    if (sw)
        for (double x : sw->buckets) detail::put_le<float>(out, static_cast<float>(x));
}

inline EmbeddingStore read_binary(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4)) throw FormatError("truncated binary file");
    if (magic != binary_magic) throw FormatError("bad magic: not an EMBW file");
    if (auto v = detail::get_le<std::uint32_t>(in); v != binary_version)
        throw FormatError("unsupported EMBW version " + std::to_string(v));
    auto dim = detail::get_le<std::uint32_t>(in);
    auto count = detail::get_le<std::uint32_t>(in);
    auto buckets = detail::get_le<std::uint32_t>(in);
    auto min_n = detail::get_le<std::uint8_t>(in);
    auto max_n = detail::get_le<std::uint8_t>(in);
    if (dim == 0) throw FormatError("zero dimension");
    std::vector<std::string> words;
    std::vector<double> rows;
    words.reserve(count);
    rows.reserve(std::size_t{count} * dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto len = detail::get_le<std::uint16_t>(in);
        std::string w(len, '\0');
        if (!in.read(w.data(), len)) throw FormatError("truncated binary file");
        words.push_back(std::move(w));
        for (std::uint32_t d = 0; d < dim; ++d) rows.push_back(detail::get_le<float>(in));
    }
    std::optional<EmbeddingStore::Subwords> sw;
    if (buckets > 0) {
        EmbeddingStore::Subwords s;
        s.indexer = {min_n, max_n, buckets};
        s.buckets.reserve(std::size_t{buckets} * dim);
        for (std::size_t k = 0; k < std::size_t{buckets} * dim; ++k) s.buckets.push_back(detail::get_le<float>(in));
        sw = std::move(s);
    }
    try {
        return EmbeddingStore(std::move(words), dim, std::move(rows), std::move(sw));
    } catch (const ArgumentError& e) {
        throw FormatError(e.what());
    } catch (const DataError& e) {
        throw FormatError(e.what());
    }
}

inline void save_text(const EmbeddingStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    write_text(out, store);
}

inline EmbeddingStore load_text(const std::string& path) {
    auto in = detail::open_input(path);
    return read_text(in);
}

inline void save_binary(const EmbeddingStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    write_binary(out, store);
}

inline EmbeddingStore load_binary(const std::string& path) {
    auto in = detail::open_input(path);
    return read_binary(in);
}

/// Picks the format from the leading magic bytes.
inline EmbeddingStore load_store(const std::string& path) {
    auto in = detail::open_input(path);
    std::array<char, 4> head{};
    in.read(head.data(), 4);
    bool binary = in.gcount() == 4 && head == binary_magic;
    in.clear();
    in.seekg(0);
    return binary ? read_binary(in) : read_text(in);
}

/// Format chosen by extension: ".embw"/".bin" binary, anything else text.
inline void save_store(const EmbeddingStore& store, const std::string& path) {
    auto ends_with = [&](std::string_view suffix) {
        return path.size() >= suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".embw") || ends_with(".bin"))
        save_binary(store, path);
    else
        save_text(store, path);
}

} // namespace wordbench
