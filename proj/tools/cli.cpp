#include "cli.hpp"

#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <wordbench/wordbench.hpp>

namespace wordbench::cli {
namespace {

using nlohmann::json;

constexpr int exit_ok = 0;
constexpr int exit_data = 1;
constexpr int exit_usage = 2;

class UsageError : public Error {
public:
    using Error::Error;
};

// Flag values rejected by a config's own validation are usage errors.
template <typename Config>
void validate_flags(const Config& cfg) {
    try {
        cfg.validate();
    } catch (const ArgumentError& e) {
        throw UsageError(e.what());
    }
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path + "'");
    f << text;
}

std::string render(const json& j, const std::string& table, const std::string& format) {
    return format == "table" ? table : j.dump(2) + "\n";
}

struct TrainArgs {
    std::string algo, corpus, out;
    std::optional<std::size_t> dim;
    std::optional<int> window, epochs, negatives, min_n, max_n;
    std::optional<std::uint64_t> min_count;
    std::optional<double> lr, subsample, x_max, alpha;
    std::optional<std::uint32_t> buckets;
    std::uint64_t seed = 1;
    int threads = 1;
};

void add_train(CLI::App& app, TrainArgs& a, std::function<void()>& action, std::ostream& out) {
    auto* sub = app.add_subcommand("train", "Train word vectors");
    sub->add_option("--algo", a.algo, "sgns | cbow | glove | subword-sg")
        ->required()
        ->check(CLI::IsMember({"sgns", "cbow", "glove", "subword-sg"}));
    sub->add_option("--corpus", a.corpus, "UTF-8 text, one document per line")->required();
    sub->add_option("--out", a.out, "Output model (.embw binary, otherwise text)")->required();
    sub->add_option("--dim", a.dim, "Vector dimension");
    sub->add_option("--window", a.window, "Context window");
    sub->add_option("--min-count", a.min_count, "Minimum word frequency");
    sub->add_option("--epochs", a.epochs, "Training epochs");
    sub->add_option("--lr", a.lr, "Initial learning rate");
    sub->add_option("--negatives", a.negatives, "Negative samples per positive");
    sub->add_option("--subsample", a.subsample, "Frequent-word subsampling threshold");
    sub->add_option("--min-n", a.min_n, "Shortest character n-gram");
    sub->add_option("--max-n", a.max_n, "Longest character n-gram");
    sub->add_option("--buckets", a.buckets, "Hashed n-gram buckets");
    sub->add_option("--x-max", a.x_max, "GloVe weighting cutoff");
    sub->add_option("--alpha", a.alpha, "GloVe weighting exponent");
    sub->add_option("--seed", a.seed, "Random seed")->capture_default_str();
    sub->add_option("--threads", a.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub->callback([&] {
        action = [&] {
            auto cfg = TrainConfig::defaults_for(parse_algorithm(a.algo));
            if (a.dim) cfg.dim = *a.dim;
            if (a.window) cfg.window = *a.window;
            if (a.min_count) cfg.min_count = *a.min_count;
            if (a.epochs) cfg.epochs = *a.epochs;
            if (a.lr) cfg.learning_rate = *a.lr;
            if (a.negatives) cfg.negatives = *a.negatives;
            if (a.subsample) cfg.subsample_threshold = *a.subsample;
            if (a.min_n) cfg.min_n = *a.min_n;
            if (a.max_n) cfg.max_n = *a.max_n;
            if (a.buckets) cfg.bucket_count = *a.buckets;
            if (a.x_max) cfg.x_max = *a.x_max;
            if (a.alpha) cfg.alpha = *a.alpha;
            cfg.seed = a.seed;
            cfg.threads = a.threads;
            validate_flags(cfg);
            auto corpus = load_raw_corpus(a.corpus);
            GloveTrace trace;
            auto store = train(corpus, cfg, &trace);
            save_store(store, a.out);
            json report{{"algorithm", std::string(to_string(cfg.algorithm))},
                        {"corpus", a.corpus},
                        {"out", a.out},
                        {"dim", cfg.dim},
                        {"window", cfg.window},
                        {"min_count", cfg.min_count},
                        {"epochs", cfg.epochs},
                        {"lr", cfg.learning_rate},
                        {"negatives", cfg.negatives},
                        {"subsample", cfg.subsample_threshold},
                        {"min_n", cfg.min_n},
                        {"max_n", cfg.max_n},
                        {"buckets", cfg.bucket_count},
                        {"x_max", cfg.x_max},
                        {"alpha", cfg.alpha},
                        {"seed", cfg.seed},
                        {"threads", cfg.threads},
                        {"vocabulary", store.size()}};
            if (cfg.algorithm == Algorithm::glove) report["loss"] = trace.epoch_loss;
            out << report.dump(2) << "\n";
        };
    });
}

struct AnalogyArgs {
    std::string model, questions, kinds, out, format = "json";
    std::size_t restrict_vocab = default_restrict_vocab;
    bool include_inputs = false;
    int threads = 1;
};

void add_eval_analogy(CLI::App& app, AnalogyArgs& a, std::function<void()>& action, std::ostream& out) {
    auto* sub = app.add_subcommand("eval-analogy", "Word-analogy accuracy");
    sub->add_option("--model", a.model, "Embedding file (text or .embw)")->required();
    sub->add_option("--questions", a.questions, "Analogy file with ': section' headers")->required();
    sub->add_option("--restrict-vocab", a.restrict_vocab, "Only the first N words are candidates")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub->add_flag("--include-inputs", a.include_inputs, "Allow a, b, c as answers");
    sub->add_option("--kinds", a.kinds, "Section kind overrides: '<section> semantic|syntactic'");
    sub->add_option("--threads", a.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--format", a.format, "json | table")->capture_default_str()->check(CLI::IsMember({"json", "table"}));
    sub->add_option("--out", a.out, "Report path (default: stdout)");
    sub->callback([&] {
        action = [&] {
            auto store = load_store(a.model);
            auto ds = load_analogy_file(a.questions, a.kinds);
            auto report = evaluate(store, ds, a.restrict_vocab, !a.include_inputs, a.threads);
            auto j = report.to_json();
            j["config"]["model"] = a.model;
            j["config"]["questions"] = a.questions;
            j["config"]["kinds"] = a.kinds;
            emit(render(j, report.to_table(), a.format), a.out, out);
        };
    });
}

struct ClassifyArgs {
    std::string model, data, stopwords, out, format = "json";
    double train_frac = 0.8, C = 1.0;
    std::uint64_t seed = 1;
};

void add_eval_classify(CLI::App& app, ClassifyArgs& a, std::function<void()>& action, std::ostream& out) {
    auto* sub = app.add_subcommand("eval-classify", "tf-idf mean-vector document classification");
    sub->add_option("--model", a.model, "Embedding file")->required();
    sub->add_option("--data", a.data, "JSON lines {\"label\", \"text\"}")->required();
    sub->add_option("--stopwords", a.stopwords, "Stop-word list, one per line")->required();
    sub->add_option("--train-frac", a.train_frac, "Training share")->capture_default_str();
    sub->add_option("--seed", a.seed, "Split seed")->capture_default_str();
    sub->add_option("--C", a.C, "Inverse regularization strength")->capture_default_str();
    sub->add_option("--format", a.format, "json | table")->capture_default_str()->check(CLI::IsMember({"json", "table"}));
    sub->add_option("--out", a.out, "Report path (default: stdout)");
    sub->callback([&] {
        action = [&] {
            if (!(a.train_frac > 0.0 && a.train_frac < 1.0)) throw UsageError("--train-frac must lie in (0, 1)");
            if (!(a.C > 0.0)) throw UsageError("--C must be positive");
            auto store = load_store(a.model);
            auto docs = load_labeled_corpus(a.data);
            auto stop = load_stoplist(a.stopwords);
            ClassificationExperiment exp;
            exp.train_fraction = a.train_frac;
            exp.split_seed = a.seed;
            exp.logreg.C = a.C;
            auto report = run_classification_experiment(docs, store, stop, exp);
            report.config["model"] = a.model;
            report.config["data"] = a.data;
            report.config["stopwords"] = a.stopwords;
            emit(render(report.to_json(), report.to_table(), a.format), a.out, out);
        };
    });
}

struct TagArgs {
    std::string model, train, test, out, format = "json";
    double dev_frac = 0.2, lr = 0.6, decay = 0.05;
    int epochs = 200, seeds = 10, threads = 1;
};

void add_eval_tag(CLI::App& app, TagArgs& a, std::function<void()>& action, std::ostream& out) {
    auto* sub = app.add_subcommand("eval-tag", "BiLSTM UPOS/FEATS tagging with frozen embeddings");
    sub->add_option("--model", a.model, "Embedding file")->required();
    sub->add_option("--train", a.train, "CoNLL-U training treebank")->required();
    sub->add_option("--test", a.test, "CoNLL-U test treebank")->required();
    sub->add_option("--dev-frac", a.dev_frac, "Share of train held out for model selection")->capture_default_str();
    sub->add_option("--epochs", a.epochs, "Epochs per seed")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--lr", a.lr, "Initial learning rate")->capture_default_str();
    sub->add_option("--decay", a.decay, "Time-based learning-rate decay")->capture_default_str();
    sub->add_option("--seeds", a.seeds, "Number of seeds (0..N-1) to average")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub->add_option("--threads", a.threads, "Seeds trained in parallel")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--format", a.format, "json | table")->capture_default_str()->check(CLI::IsMember({"json", "table"}));
    sub->add_option("--out", a.out, "Report path (default: stdout)");
    sub->callback([&] {
        action = [&] {
            TaggerConfig cfg;
            cfg.dev_fraction = a.dev_frac;
            cfg.epochs = a.epochs;
            cfg.lr0 = a.lr;
            cfg.decay = a.decay;
            cfg.threads = a.threads;
            cfg.seeds.clear();
            for (int s = 0; s < a.seeds; ++s) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
            validate_flags(cfg);
            auto store = load_store(a.model);
            auto train_set = load_conllu(a.train);
            auto test_set = load_conllu(a.test);
            auto run = train_tagger(train_set, store, cfg, test_set);
            run.report.config["model"] = a.model;
            run.report.config["train"] = a.train;
            run.report.config["test"] = a.test;
            emit(render(run.report.to_json(), run.report.to_table(), a.format), a.out, out);
        };
    });
}

struct NnArgs {
    std::string model, word, out;
    long k = 5;
};

void add_nn(CLI::App& app, NnArgs& a, std::function<void()>& action, std::ostream& out) {
    auto* sub = app.add_subcommand("nn", "Nearest neighbours of a word");
    sub->add_option("--model", a.model, "Embedding file")->required();
    sub->add_option("--word", a.word, "Query word")->required();
    sub->add_option("-k", a.k, "Number of neighbours")->capture_default_str();
    sub->add_option("--out", a.out, "Output path (default: stdout)");
    sub->callback([&] {
        action = [&] {
            if (a.k < 0) throw UsageError("-k must be non-negative");
            auto store = load_store(a.model);
            auto v = store.vector(a.word);
            if (!v) throw DataError("'" + a.word + "' is not in the vocabulary");
            std::ostringstream text;
            for (const auto& n : store.nearest(*v, a.k, {a.word})) text << n.word << '\t' << n.similarity << '\n';
            emit(text.str(), a.out, out);
        };
    });
}

struct ConvertArgs {
    std::string in, out;
};

void add_convert(CLI::App& app, ConvertArgs& a, std::function<void()>& action) {
    auto* sub = app.add_subcommand("convert", "Convert between text and .embw formats");
    sub->add_option("--in", a.in, "Input model (format detected from content)")->required();
    sub->add_option("--out", a.out, "Output model (.embw binary, .txt text)")->required();
    sub->callback([&] {
        action = [&] { save_store(load_store(a.in), a.out); };
    });
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Word-embedding training and evaluation workbench", "wordbench"};
    app.require_subcommand(1);
    std::function<void()> action;
    TrainArgs train_args;
    AnalogyArgs analogy_args;
    ClassifyArgs classify_args;
    TagArgs tag_args;
    NnArgs nn_args;
    ConvertArgs convert_args;
    add_train(app, train_args, action, out);
    add_eval_analogy(app, analogy_args, action, out);
    add_eval_classify(app, classify_args, action, out);
    add_eval_tag(app, tag_args, action, out);
    add_nn(app, nn_args, action, out);
    add_convert(app, convert_args, action);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }
    try {
        if (action) action();
        return exit_ok;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_data;
    }
}

} // namespace wordbench::cli
