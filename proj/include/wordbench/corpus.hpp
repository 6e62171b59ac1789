#pragma once

// Text ingestion: normalization, stop words, labeled JSON-lines documents,
// CoNLL-U treebanks and seeded random splits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"
#include "utf8.hpp"

namespace wordbench {

struct Document {
    std::vector<std::string> tokens;

    friend bool operator==(const Document&, const Document&) = default;
};

struct LabeledDocument {
    std::string label;
    std::vector<std::string> tokens;
};

struct ConlluToken {
    std::string form;
    std::string upos;
    std::string feats;

    friend bool operator==(const ConlluToken&, const ConlluToken&) = default;
};

struct ConlluSentence {
    std::vector<ConlluToken> tokens;

    friend bool operator==(const ConlluSentence&, const ConlluSentence&) = default;
};

using StopList = std::unordered_set<std::string>;

/// Lowercases and splits on every non-letter code point. Punctuation, digits,
/// symbols and whitespace never survive.
inline Document normalize_and_tokenize(std::string_view text) {
    Document doc;
    std::string current;
    for (std::size_t pos = 0; pos < text.size();) {
        char32_t cp = utf8::decode(text, pos);
        if (utf8::is_letter(cp)) {
            utf8::append(current, utf8::to_lower(cp));
        } else if (!current.empty()) {
            doc.tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) doc.tokens.push_back(std::move(current));
    return doc;
}

inline Document remove_stopwords(const Document& doc, const StopList& stoplist) {
    Document out;
    out.tokens.reserve(doc.tokens.size());
    for (const auto& t : doc.tokens)
        if (!stoplist.contains(t)) out.tokens.push_back(t);
    return out;
}

namespace detail {
inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    return in;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}
} // namespace detail

/// One word per line; entries are lowercased so they match normalized tokens.
inline StopList load_stoplist(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("stop-word list '" + path + "' not found");
    StopList words;
    std::string line;
    while (std::getline(in, line)) {
        detail::strip_cr(line);
        auto b = line.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        auto e = line.find_last_not_of(" \t");
        words.insert(utf8::lowercase(std::string_view(line).substr(b, e - b + 1)));
    }
    return words;
}

/// Raw corpus: one document per line.
inline std::vector<Document> read_raw_corpus(std::istream& in) {
    std::vector<Document> docs;
    std::string line;
    while (std::getline(in, line)) docs.push_back(normalize_and_tokenize(line));
    return docs;
}

inline std::vector<Document> load_raw_corpus(const std::string& path) {
    auto in = detail::open_input(path);
    return read_raw_corpus(in);
}

/// JSON lines of {"label": str, "text": str}; blank lines ignored.
inline std::vector<LabeledDocument> read_labeled_corpus(std::istream& in) {
    std::vector<LabeledDocument> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
        }
        if (!j.is_object() || !j.contains("label") || !j.contains("text") || !j["label"].is_string() ||
            !j["text"].is_string())
            throw ParseError("expected {\"label\": string, \"text\": string}", lineno);
        LabeledDocument doc;
        doc.label = j["label"].get<std::string>();
        if (doc.label.empty()) throw ParseError("empty label", lineno);
        doc.tokens = normalize_and_tokenize(j["text"].get<std::string>()).tokens;
        docs.push_back(std::move(doc));
    }
    return docs;
}

inline std::vector<LabeledDocument> load_labeled_corpus(const std::string& path) {
    auto in = detail::open_input(path);
    return read_labeled_corpus(in);
}

/// Keeps FORM, UPOS and FEATS; skips comments, multiword ranges ("1-2") and
/// empty nodes ("1.1").
inline std::vector<ConlluSentence> read_conllu(std::istream& in) {
    std::vector<ConlluSentence> sentences;
    ConlluSentence current;
    std::string line;
    std::size_t lineno = 0;
    auto flush = [&] {
        if (!current.tokens.empty()) sentences.push_back(std::move(current));
        current = {};
    };
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.empty()) {
            flush();
            continue;
        }
        if (line.front() == '#') continue;
        std::vector<std::string_view> cols;
        std::string_view rest(line);
        for (;;) {
            auto tab = rest.find('\t');
            cols.push_back(rest.substr(0, tab));
            if (tab == std::string_view::npos) break;
            rest.remove_prefix(tab + 1);
        }
        if (cols.size() != 10)
            throw ParseError("expected 10 tab-separated columns, found " + std::to_string(cols.size()), lineno);
        if (cols[0].find('-') != std::string_view::npos || cols[0].find('.') != std::string_view::npos) continue;
        current.tokens.push_back({std::string(cols[1]), std::string(cols[3]), std::string(cols[5])});
    }
    flush();
    return sentences;
}

inline std::vector<ConlluSentence> load_conllu(const std::string& path) {
    auto in = detail::open_input(path);
    return read_conllu(in);
}

/// Minimal writer: ID, FORM, UPOS and FEATS populated, other columns "_".
inline void write_conllu(std::ostream& out, std::span<const ConlluSentence> sentences) {
    for (const auto& s : sentences) {
        for (std::size_t i = 0; i < s.tokens.size(); ++i) {
            const auto& t = s.tokens[i];
            out << (i + 1) << '\t' << t.form << "\t_\t" << t.upos << "\t_\t" << t.feats << "\t_\t_\t_\t_\n";
        }
        out << '\n';
    }
}

/// Shuffles indices with a seeded SplitMix64 and moves the last round(fraction*N)
/// items into the second part. Both parts keep the input's relative order.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_random(std::span<const T> items, double fraction,
                                                       std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ArgumentError("split fraction must lie in (0, 1)");
    if (items.empty()) throw ArgumentError("cannot split an empty list");
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(seed);
    rng.shuffle(order.begin(), order.end());
    auto n_b = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(items.size())));
    std::vector<bool> in_b(items.size(), false);
    for (std::size_t k = items.size() - n_b; k < items.size(); ++k) in_b[order[k]] = true;
    std::pair<std::vector<T>, std::vector<T>> parts;
    parts.first.reserve(items.size() - n_b);
    parts.second.reserve(n_b);
    for (std::size_t i = 0; i < items.size(); ++i) (in_b[i] ? parts.second : parts.first).push_back(items[i]);
    return parts;
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_random(const std::vector<T>& items, double fraction,
                                                       std::uint64_t seed) {
    return split_random(std::span<const T>(items), fraction, seed);
}

} // namespace wordbench
