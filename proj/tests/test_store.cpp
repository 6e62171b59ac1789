#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include <oracles.hpp>
#include <wordbench/rng.hpp>
#include <wordbench/store.hpp>

using namespace wordbench;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("wordbench_store_" + name)).string();
}

// Random f32-representable values so binary round-trips can be bit-exact.
std::vector<double> random_rows(std::size_t n, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    return v;
}

EmbeddingStore random_store(std::size_t words, std::size_t dim, std::uint64_t seed) {
    std::vector<std::string> w;
    for (std::size_t i = 0; i < words; ++i) w.push_back("w" + std::to_string(i));
    return EmbeddingStore(w, dim, random_rows(words * dim, seed));
}

EmbeddingStore subword_store(std::uint32_t buckets, std::uint64_t seed) {
    EmbeddingStore::Subwords sw{{3, 3, buckets}, random_rows(std::size_t{buckets} * 4, seed + 1)};
    return EmbeddingStore({"ab", "cd", "efg"}, 4, random_rows(12, seed), sw);
}

std::vector<std::vector<double>> rows_of(const EmbeddingStore& s) {
    std::vector<std::vector<double>> out;
    for (std::uint32_t i = 0; i < s.size(); ++i) out.emplace_back(s.row(i).begin(), s.row(i).end());
    return out;
}

} // namespace

TEST(Cosine, Identities) {
    std::vector<double> v{0.3, -2.0, 1.5};
    std::vector<double> neg{-0.3, 2.0, -1.5};
    EXPECT_NEAR(cosine(v, v), 1.0, 1e-15);
    EXPECT_NEAR(cosine(v, neg), -1.0, 1e-15);
    EXPECT_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
    EXPECT_THROW(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), ArgumentError);
}

TEST(Store, PlainLookup) {
    EmbeddingStore s({"a", "b"}, 2, {1, 0, 0, 1});
    EXPECT_EQ(*s.vector("b"), (std::vector<double>{0, 1}));
    EXPECT_FALSE(s.vector("zzz").has_value());
}

TEST(Store, RejectsNonFiniteAndDuplicates) {
    EXPECT_THROW(EmbeddingStore({"a"}, 1, {std::nan("")}), DataError);
    EXPECT_THROW(EmbeddingStore({"a", "a"}, 1, {1, 2}), DataError);
    EXPECT_THROW(EmbeddingStore({"a"}, 2, {1}), ArgumentError);
}

TEST(Store, OovSingleBucketIsThatRow) {
    EmbeddingStore::Subwords sw{{3, 3, 1}, {0.25, -0.5}};
    EmbeddingStore s({"x"}, 2, {9, 9}, sw);
    EXPECT_EQ(*s.vector("unseen"), (std::vector<double>{0.25, -0.5}));
}

TEST(Store, OovComposesFromHandGatheredBuckets) {
    auto s = subword_store(1000, 4);
    const auto b1 = oracle::fnv1a("<xy") % 1000, b2 = oracle::fnv1a("xy>") % 1000;
    auto v = *s.vector("xy");
    for (std::size_t d = 0; d < 4; ++d)
        EXPECT_EQ(v[d], (s.bucket_row(b1)[d] + s.bucket_row(b2)[d]) / 2.0);
}

TEST(Store, InVocabSubwordIsMeanOfWordAndBuckets) {
    auto s = subword_store(1000, 9);
    const auto b1 = oracle::fnv1a("<ab") % 1000, b2 = oracle::fnv1a("ab>") % 1000;
    auto v = *s.vector("ab");
    for (std::size_t d = 0; d < 4; ++d)
        EXPECT_EQ(v[d], (s.row(0)[d] + s.bucket_row(b1)[d] + s.bucket_row(b2)[d]) / 3.0);
    EXPECT_EQ(*s.vector("ab"), v);
}

TEST(Nearest, EdgeCases) {
    auto s = random_store(10, 5, 1);
    auto q = *s.vector("w3");
    EXPECT_TRUE(s.nearest(q, 0).empty());
    EXPECT_THROW(s.nearest(q, -1), ArgumentError);
    auto top = s.nearest(q, 1);
    ASSERT_EQ(top.size(), 1u);
    EXPECT_EQ(top[0].word, "w3");
    EXPECT_NEAR(top[0].similarity, 1.0, 1e-12);
    EXPECT_EQ(s.nearest(q, 100).size(), 10u);
}

TEST(Nearest, MatchesExhaustiveScan) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto s = random_store(50, 8, seed);
        SplitMix64 rng(seed + 1000);
        std::vector<double> q(8);
        for (auto& x : q) x = rng.uniform(-1, 1);
        std::unordered_set<std::string> ex{"w" + std::to_string(seed % 50)};
        auto got = s.nearest(q, 5, ex);
        auto want = oracle::nearest(s.words(), rows_of(s), q, 5, {ex.begin(), ex.end()});
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t k = 0; k < got.size(); ++k) {
            EXPECT_EQ(got[k].word, want[k].word);
            EXPECT_NEAR(got[k].similarity, want[k].sim, 1e-12);
        }
    }
}

TEST(Nearest, TiesBreakByAscendingId) {
    EmbeddingStore s({"a", "b", "c"}, 2, {0, 1, 1, 0, 1, 0});
    auto r = s.nearest(std::vector<double>{1, 0}, 2);
    EXPECT_EQ(r[0].word, "b");
    EXPECT_EQ(r[1].word, "c");
}

TEST(Nearest, InvariantUnderPositiveScaling) {
    auto s = random_store(40, 6, 77);
    std::vector<double> q{0.1, -0.4, 0.3, 0.9, -0.2, 0.05};
    auto base = s.nearest(q, 10);
    for (double scale : {1e-3, 0.5, 7.0, 1e4}) {
        auto qs = q;
        for (auto& x : qs) x *= scale;
        auto r = s.nearest(qs, 10);
        ASSERT_EQ(r.size(), base.size());
        for (std::size_t k = 0; k < r.size(); ++k) EXPECT_EQ(r[k].word, base[k].word);
    }
}

TEST(Nearest, NeverReturnsBuckets) {
    auto s = subword_store(50, 3);
    for (const auto& n : s.nearest(s.bucket_row(0), 10)) EXPECT_TRUE(s.id(n.word).has_value());
    EXPECT_EQ(s.nearest(s.bucket_row(0), 10).size(), 3u);
}

TEST(Restrict, KeepsPrefix) {
    auto s = random_store(5, 3, 2);
    EXPECT_EQ(s.restrict_vocab(5), s);
    EXPECT_EQ(s.restrict_vocab(400000), s);
    auto one = s.restrict_vocab(1);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one.word(0), "w0");
    auto sw = subword_store(64, 5).restrict_vocab(1);
    ASSERT_TRUE(sw.has_subwords());
    EXPECT_EQ(sw.subwords()->buckets, subword_store(64, 5).subwords()->buckets);
    EXPECT_THROW(s.restrict_vocab(0), ArgumentError);
}

TEST(TextFormat, ExactLayout) {
    std::ostringstream out;
    write_text(out, EmbeddingStore({"a"}, 2, {1, 0}));
    EXPECT_EQ(out.str(), "1 2\na 1.000000 0.000000\n");
}

TEST(TextFormat, RoundTripWithinFormatPrecision) {
    auto s = random_store(30, 7, 11);
    std::stringstream buf;
    write_text(buf, s);
    auto back = read_text(buf);
    ASSERT_EQ(back.words(), s.words());
    for (std::size_t k = 0; k < s.table().size(); ++k) EXPECT_LE(std::abs(back.table()[k] - s.table()[k]), 5e-7);
}

TEST(TextFormat, TrailingNewlineOptional) {
    std::istringstream with("2 2\na 1 2\nb 3 4\n"), without("2 2\na 1 2\nb 3 4");
    EXPECT_EQ(read_text(with), read_text(without));
}

TEST(TextFormat, ParseErrors) {
    auto line_of = [](const std::string& text) -> std::size_t {
        std::istringstream in(text);
        try {
            read_text(in);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_GT(line_of("3 2\na 1 2\nb 3 4\n"), 0u);
    EXPECT_EQ(line_of("2 2\na 1 2\nb 3\n"), 3u);
    EXPECT_EQ(line_of("2 2\na 1 2\na 3 4\n"), 3u);
    EXPECT_EQ(line_of("2 2\na 1 2 3\nb 3 4\n"), 2u);
    EXPECT_EQ(line_of("x\n"), 1u);
}

TEST(TextFormat, RefusesSubwordStore) {
    std::ostringstream out;
    EXPECT_THROW(write_text(out, subword_store(8, 1)), ArgumentError);
}

TEST(BinaryFormat, SubwordRoundTripBitExact) {
    auto s = subword_store(257, 21);
    std::stringstream buf;
    write_binary(buf, s);
    EXPECT_EQ(read_binary(buf), s);
}

TEST(BinaryFormat, PlainStoreHasNoBucketPayload) {
    auto s = random_store(3, 2, 8);
    std::stringstream buf;
    write_binary(buf, s);
    const std::string bytes = buf.str();
    // header 4+4*4+2, rows: 3 x (2 + 2 + 2*4)
    EXPECT_EQ(bytes.size(), 22u + 3u * 12u);
    EXPECT_EQ(bytes.substr(0, 4), "EMBW");
    EXPECT_EQ(bytes[16], 0);
    EXPECT_EQ(read_binary(buf), s);
}

TEST(BinaryFormat, Errors) {
    std::istringstream magic("XXXX\x01\0\0\0");
    EXPECT_THROW(read_binary(magic), FormatError);
    std::stringstream buf;
    write_binary(buf, random_store(4, 3, 1));
    std::string bytes = buf.str();
    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_binary(truncated), FormatError);
    bytes[4] = 9;
    std::istringstream version(bytes);
    EXPECT_THROW(read_binary(version), FormatError);
}

TEST(Files, MagicDetectionAndExtensions) {
    auto s = random_store(6, 3, 4);
    auto bin = temp_path("m.embw"), txt = temp_path("m.txt");
    save_store(s, bin);
    save_store(s, txt);
    EXPECT_EQ(load_store(bin), s);
    auto t = load_store(txt);
    EXPECT_EQ(t.words(), s.words());
    std::filesystem::remove(bin);
    std::filesystem::remove(txt);
    EXPECT_THROW(load_store("/nonexistent/model.embw"), ConfigError);
}
