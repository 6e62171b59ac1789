#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <oracles.hpp>
#include <wordbench/vocab.hpp>

using namespace wordbench;

TEST(Vocab, MinCountFilters) {
    auto v = build_vocab(std::vector<std::string>{"a", "a", "b"}, 2);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v.word(0), "a");
    EXPECT_EQ(v.count(0), 2u);
}

TEST(Vocab, OrderedByCountThenWord) {
    auto v = build_vocab(std::vector<std::string>{"a", "a", "b"}, 1);
    EXPECT_EQ(*v.id("a"), 0u);
    EXPECT_EQ(*v.id("b"), 1u);
    auto tie = build_vocab(std::vector<std::string>{"b", "b", "a", "a"}, 1);
    EXPECT_EQ(*tie.id("a"), 0u);
    EXPECT_EQ(*tie.id("b"), 1u);
}

TEST(Vocab, EmptyResultIsError) {
    EXPECT_THROW(build_vocab(std::vector<std::string>{"a"}, 2), DataError);
    EXPECT_THROW(build_vocab(std::vector<std::string>{}, 1), DataError);
}

TEST(Vocab, CountsSumToTokenTotal) {
    std::vector<Document> docs{{{"x", "y", "x"}}, {{"z"}}, {{}}, {{"y", "y"}}};
    auto v = build_vocab(docs, 1);
    EXPECT_EQ(v.total_count(), 6u);
    for (std::uint32_t i = 0; i + 1 < v.size(); ++i) EXPECT_GE(v.count(i), v.count(i + 1));
}

TEST(Vocab, SerializesInIdOrder) {
    auto v = build_vocab(std::vector<std::string>{"b", "a", "a"}, 1);
    std::stringstream s;
    write_vocab(s, v);
    EXPECT_EQ(s.str(), "a\t2\nb\t1\n");
    auto back = read_vocab(s);
    EXPECT_EQ(back.words(), v.words());
    std::istringstream bad("a\tx\n");
    EXPECT_THROW(read_vocab(bad), ParseError);
}

TEST(Ngrams, BoundaryMarkedTrigrams) {
    SubwordIndexer tri{3, 3, 100};
    EXPECT_EQ(extract_ngrams("ab", tri), (std::vector<std::string>{"<ab", "ab>"}));
    EXPECT_EQ(extract_ngrams("a", tri), (std::vector<std::string>{"<a>"}));
}

TEST(Ngrams, ShorterLengthsFirst) {
    SubwordIndexer idx{3, 4, 100};
    EXPECT_EQ(extract_ngrams("abc", idx), (std::vector<std::string>{"<ab", "abc", "bc>", "<abc", "abc>"}));
}

TEST(Ngrams, ShortMarkedFormReturnedWhole) {
    SubwordIndexer idx{5, 6, 100};
    EXPECT_EQ(extract_ngrams("ab", idx), (std::vector<std::string>{"<ab>"}));
}

TEST(Ngrams, CountsMatchMarkedLength) {
    for (int n = 1; n <= 5; ++n) {
        SubwordIndexer idx{n, n, 10};
        for (std::string w : {"a", "ab", "abcd", "abcdefg"}) {
            const int L = static_cast<int>(w.size()) + 2;
            const auto expected = L >= n ? static_cast<std::size_t>(L - n + 1) : 1u;
            EXPECT_EQ(extract_ngrams(w, idx).size(), expected) << w << " n=" << n;
        }
    }
}

TEST(Ngrams, OperateOnCodePoints) {
    SubwordIndexer tri{3, 3, 10};
    EXPECT_EQ(extract_ngrams("մեկ", tri), (std::vector<std::string>{"<մե", "մեկ", "եկ>"}));
}

TEST(Hash, KnownFnv1aVectors) {
    EXPECT_EQ(fnv1a32(""), 0x811c9dc5u);
    EXPECT_EQ(fnv1a32("a"), 0xe40c292cu);
    EXPECT_EQ(fnv1a32("foobar"), 0xbf9cf968u);
}

TEST(Hash, BucketMatchesReference) {
    EXPECT_EQ(ngram_bucket("ab>", 2'000'000), oracle::fnv1a("ab>") % 2'000'000);
    EXPECT_EQ(ngram_bucket("ab>", 2'000'000), 1241756u);
    EXPECT_EQ(ngram_bucket("<ab", 2'000'000), 209508u);
    EXPECT_EQ(ngram_bucket("anything", 1), 0u);
    EXPECT_EQ(ngram_bucket("xyz", 977), ngram_bucket("xyz", 977));
    EXPECT_THROW(ngram_bucket("x", 0), ArgumentError);
    for (std::string s : {"<մե", "մեկ", "եկ>", "q"}) EXPECT_EQ(fnv1a32(s), oracle::fnv1a(s));
}

TEST(Sampler, MassProportionalToPower) {
    std::vector<std::string> toks(16, "a");
    toks.push_back("b");
    auto vocab = build_vocab(toks, 1);
    NegativeSampler s(vocab, 0.75);
    EXPECT_NEAR(s.mass(0) / s.mass(1), 8.0, 8.0 * 1e-9);
    EXPECT_NEAR(s.probability(0), 8.0 / 9.0, 1e-9);
}

TEST(Sampler, SingleWordAlwaysDrawn) {
    auto vocab = build_vocab(std::vector<std::string>{"only", "only"}, 1);
    NegativeSampler s(vocab);
    SplitMix64 rng(3);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(s.draw(rng), 0u);
}

TEST(Sampler, UniformCountsWithinThreeSigma) {
    auto vocab = build_vocab(std::vector<std::string>{"a", "b", "c"}, 1);
    NegativeSampler s(vocab);
    SplitMix64 rng(12345);
    const int draws = 30000;
    std::array<int, 3> hits{};
    for (int i = 0; i < draws; ++i) ++hits[s.draw(rng)];
    const double p = 1.0 / 3.0, sigma = std::sqrt(draws * p * (1 - p));
    for (int h : hits) EXPECT_LT(std::abs(h - draws * p), 3 * sigma);
}
