#pragma once

// Word-analogy evaluation: a:b::c:? by vector offset over unit vectors,
// reported per section and as micro/macro aggregates over question kinds.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "store.hpp"
#include "utf8.hpp"

namespace wordbench {

enum class SectionKind { semantic, syntactic };

inline std::string_view to_string(SectionKind k) { return k == SectionKind::semantic ? "semantic" : "syntactic"; }

struct AnalogyQuestion {
    std::string a, b, c, d;
};

struct AnalogySection {
    std::string name;
    SectionKind kind = SectionKind::semantic;
    std::vector<AnalogyQuestion> questions;
};

struct AnalogyDataset {
    std::vector<AnalogySection> sections;

    std::size_t question_count() const {
        std::size_t n = 0;
        for (const auto& s : sections) n += s.questions.size();
        return n;
    }
};

/// Number of leading sections labelled semantic when no kinds file is given.
inline constexpr std::size_t default_semantic_sections = 5;

/// ": name" headers followed by lines of four words, lowercased on load.
inline AnalogyDataset read_analogy(std::istream& in) {
    AnalogyDataset ds;
    std::unordered_set<std::string> names;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        if (line[first] == ':') {
            std::istringstream hs(line.substr(first + 1));
            std::string name;
            hs >> name;
            if (name.empty()) throw ParseError("section header without a name", lineno);
            if (!names.insert(name).second) throw ParseError("duplicate section '" + name + "'", lineno);
            auto kind = ds.sections.size() < default_semantic_sections ? SectionKind::semantic : SectionKind::syntactic;
            ds.sections.push_back({name, kind, {}});
            continue;
        }
        if (ds.sections.empty()) throw ParseError("question before any section header", lineno);
        std::istringstream ls(line);
        std::vector<std::string> words;
        for (std::string w; ls >> w;) words.push_back(utf8::lowercase(w));
        if (words.size() != 4)
            throw ParseError("expected 4 words per question, found " + std::to_string(words.size()), lineno);
        ds.sections.back().questions.push_back({words[0], words[1], words[2], words[3]});
    }
    return ds;
}

/// Sidecar override: lines "section-name<whitespace>semantic|syntactic".
inline void apply_section_kinds(AnalogyDataset& ds, std::istream& in) {
    std::map<std::string, SectionKind> kinds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string name, kind;
        if (!(ls >> name)) continue;
        if (!(ls >> kind) || (kind != "semantic" && kind != "syntactic"))
            throw ParseError("expected '<section> semantic|syntactic'", lineno);
        kinds[name] = kind == "semantic" ? SectionKind::semantic : SectionKind::syntactic;
    }
    for (auto& s : ds.sections)
        if (auto it = kinds.find(s.name); it != kinds.end()) s.kind = it->second;
}

inline AnalogyDataset load_analogy_file(const std::string& path, const std::string& kinds_path = {}) {
    auto in = detail::open_input(path);
    auto ds = read_analogy(in);
    if (!kinds_path.empty()) {
        auto kin = detail::open_input(kinds_path);
        apply_section_kinds(ds, kin);
    }
    return ds;
}

struct AnalogyPrediction {
    std::vector<double> offset_vector; ///< p = b^ - a^ + c^
    std::optional<std::string> predicted;
    bool correct = false;
    bool skipped = false;
};

namespace detail {
inline std::optional<std::vector<double>> unit_vector(const EmbeddingStore& store, const std::string& word) {
    auto v = store.vector(word);
    if (!v) return std::nullopt;
    double n = norm(*v);
    if (n == 0.0) return std::nullopt;
    for (auto& x : *v) x /= n;
    return v;
}
} // namespace detail

/// Skipped when any of the four words has no (non-zero) vector. With
/// `exclude_inputs`, a, b and c are never candidates.
inline AnalogyPrediction solve(const EmbeddingStore& store, const AnalogyQuestion& q, bool exclude_inputs = true) {
    AnalogyPrediction out;
    auto a = detail::unit_vector(store, q.a);
    auto b = detail::unit_vector(store, q.b);
    auto c = detail::unit_vector(store, q.c);
    auto d = detail::unit_vector(store, q.d);
    if (!a || !b || !c || !d) {
        out.skipped = true;
        return out;
    }
    out.offset_vector.resize(store.dim());
    for (std::size_t i = 0; i < store.dim(); ++i) out.offset_vector[i] = (*b)[i] - (*a)[i] + (*c)[i];
    if (norm(out.offset_vector) == 0.0) return out;
    std::unordered_set<std::string> exclude;
    if (exclude_inputs) exclude = {q.a, q.b, q.c};
    auto best = store.nearest(out.offset_vector, 1, exclude);
    if (!best.empty()) {
        out.predicted = best.front().word;
        out.correct = *out.predicted == q.d;
    }
    return out;
}

struct SectionResult {
    std::string name;
    SectionKind kind = SectionKind::semantic;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;
    std::size_t correct = 0;

    std::size_t questions() const noexcept { return evaluated + skipped; }

    /// Absent when nothing in the section could be evaluated.
    std::optional<double> accuracy() const {
        if (evaluated == 0) return std::nullopt;
        return static_cast<double>(correct) / static_cast<double>(evaluated);
    }
};

struct AnalogyReport {
    std::vector<SectionResult> sections;
    std::optional<double> micro_semantic, micro_syntactic, micro_total;
    std::optional<double> macro_semantic, macro_syntactic, macro_total;
    std::size_t restrict_vocab = 0;
    bool exclude_inputs = true;

    nlohmann::json to_json() const {
        auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
        nlohmann::json j;
        j["config"] = {{"restrict_vocab", restrict_vocab}, {"exclude_inputs", exclude_inputs}};
        auto& secs = j["sections"] = nlohmann::json::array();
        for (const auto& s : sections)
            secs.push_back({{"name", s.name},
                            {"kind", std::string(to_string(s.kind))},
                            {"evaluated", s.evaluated},
                            {"skipped", s.skipped},
                            {"correct", s.correct},
                            {"accuracy", opt(s.accuracy())}});
        j["micro"] = {{"semantic", opt(micro_semantic)}, {"syntactic", opt(micro_syntactic)}, {"total", opt(micro_total)}};
        j["macro"] = {{"semantic", opt(macro_semantic)}, {"syntactic", opt(macro_syntactic)}, {"total", opt(macro_total)}};
        return j;
    }

    std::string to_table() const {
        auto pct = [](const std::optional<double>& v) {
            if (!v) return std::string("     n/a");
            char buf[32];
            std::snprintf(buf, sizeof buf, "%7.2f%%", *v * 100.0);
            return std::string(buf);
        };
        std::string out;
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-32s %-9s %9s %8s %8s %8s\n", "section", "kind", "questions", "skipped",
                      "correct", "accuracy");
        out += buf;
        for (const auto& s : sections) {
            std::snprintf(buf, sizeof buf, "%-32s %-9s %9zu %8zu %8zu %s\n", s.name.c_str(),
                          std::string(to_string(s.kind)).c_str(), s.questions(), s.skipped, s.correct,
                          pct(s.accuracy()).c_str());
            out += buf;
        }
        out += "\n            Semantic  Syntactic      Total\n";
        out += "micro     " + pct(micro_semantic) + "   " + pct(micro_syntactic) + "   " + pct(micro_total) + "\n";
        out += "macro     " + pct(macro_semantic) + "   " + pct(macro_syntactic) + "   " + pct(macro_total) + "\n";
        return out;
    }
};

/// Micro: pooled correct/evaluated over a kind. Macro: unweighted mean of the
/// section accuracies of a kind, sections without evaluated questions left out.
inline AnalogyReport aggregate(std::vector<SectionResult> sections) {
    AnalogyReport r;
    r.sections = std::move(sections);
    auto reduce = [&](auto&& pick, std::optional<double>& micro, std::optional<double>& macro) {
        std::size_t evaluated = 0, correct = 0, n_acc = 0;
        double acc_sum = 0.0;
        for (const auto& s : r.sections) {
            if (!pick(s)) continue;
            evaluated += s.evaluated;
            correct += s.correct;
            if (auto a = s.accuracy()) {
                acc_sum += *a;
                ++n_acc;
            }
        }
        if (evaluated > 0) micro = static_cast<double>(correct) / static_cast<double>(evaluated);
        if (n_acc > 0) macro = acc_sum / static_cast<double>(n_acc);
    };
    reduce([](const SectionResult& s) { return s.kind == SectionKind::semantic; }, r.micro_semantic, r.macro_semantic);
    reduce([](const SectionResult& s) { return s.kind == SectionKind::syntactic; }, r.micro_syntactic, r.macro_syntactic);
    reduce([](const SectionResult&) { return true; }, r.micro_total, r.macro_total);
    return r;
}

inline constexpr std::size_t default_restrict_vocab = 400000;

/// Restricts the store to its first `restrict` words, answers every question
/// (optionally on several read-only workers) and aggregates.
inline AnalogyReport evaluate(const EmbeddingStore& store, const AnalogyDataset& dataset,
                              std::size_t restrict = default_restrict_vocab, bool exclude_inputs = true,
                              int threads = 1) {
    if (restrict < 1) throw ArgumentError("restrict must be >= 1");
    const EmbeddingStore limited = store.restrict_vocab(restrict);
    std::vector<const AnalogyQuestion*> flat;
    for (const auto& s : dataset.sections)
        for (const auto& q : s.questions) flat.push_back(&q);
    // 0 = skipped, 1 = wrong, 2 = correct
    std::vector<unsigned char> outcome(flat.size(), 0);
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            auto p = solve(limited, *flat[k], exclude_inputs);
            outcome[k] = p.skipped ? 0 : (p.correct ? 2 : 1);
        }
    };
    auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || flat.size() < 2) {
        work(0, flat.size());
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(work, flat.size() * w / workers, flat.size() * (w + 1) / workers);
        for (auto& t : pool) t.join();
    }
    std::vector<SectionResult> results;
    std::size_t k = 0;
    for (const auto& s : dataset.sections) {
        SectionResult r{s.name, s.kind, 0, 0, 0};
        for (std::size_t i = 0; i < s.questions.size(); ++i, ++k) {
            if (outcome[k] == 0) {
                ++r.skipped;
                continue;
            }
            ++r.evaluated;
            if (outcome[k] == 2) ++r.correct;
        }
        results.push_back(std::move(r));
    }
    auto report = aggregate(std::move(results));
    report.restrict_vocab = restrict;
    report.exclude_inputs = exclude_inputs;
    return report;
}

} // namespace wordbench
