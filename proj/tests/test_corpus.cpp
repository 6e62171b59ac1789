#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <wordbench/corpus.hpp>

using namespace wordbench;

namespace {
std::vector<std::string> toks(std::string_view s) { return normalize_and_tokenize(s).tokens; }

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("wordbench_corpus_" + name)).string();
}
} // namespace

TEST(Tokenize, DropsPunctuationAndDigits) {
    EXPECT_EQ(toks("Աշխարհ, 123 բարեւ!"), (std::vector<std::string>{"աշխարհ", "բարեւ"}));
    EXPECT_TRUE(toks("").empty());
    EXPECT_EQ(toks("A.B"), (std::vector<std::string>{"a", "b"}));
}

TEST(Tokenize, ArmenianPunctuationSeparates) {
    // U+055D comma and U+0589 full stop
    EXPECT_EQ(toks("մեկ՝երկու։երեք"), (std::vector<std::string>{"մեկ", "երկու", "երեք"}));
    EXPECT_EQ(toks("«Բարեւ»"), (std::vector<std::string>{"բարեւ"}));
}

TEST(Tokenize, DigitsInsideWordsSplit) { EXPECT_EQ(toks("abc9def"), (std::vector<std::string>{"abc", "def"})); }

TEST(Tokenize, InvalidUtf8IsASeparator) { EXPECT_EQ(toks("ab\xff" "cd"), (std::vector<std::string>{"ab", "cd"})); }

TEST(Tokenize, IdempotentOnJoinedOutput) {
    const std::vector<std::string> samples{"Hello, World! 42 times", "Երեւանը Հայաստանի մայրաքաղաքն է։",
                                           "ÉCOLE--école__Straße", "  \t mixed\tWHITE space \n"};
    for (const auto& s : samples) {
        auto once = toks(s);
        std::string joined;
        for (const auto& t : once) joined += t + " ";
        EXPECT_EQ(toks(joined), once) << s;
        for (const auto& t : once)
            for (char c : t) {
                EXPECT_FALSE(std::isspace(static_cast<unsigned char>(c)));
                EXPECT_FALSE(std::isdigit(static_cast<unsigned char>(c)));
                EXPECT_FALSE(std::ispunct(static_cast<unsigned char>(c)));
                EXPECT_FALSE(c >= 'A' && c <= 'Z');
            }
    }
}

TEST(Stopwords, Filtering) {
    EXPECT_EQ(remove_stopwords(Document{{"a", "b", "a"}}, {"a"}).tokens, (std::vector<std::string>{"b"}));
    Document doc{{"x", "y"}};
    EXPECT_EQ(remove_stopwords(doc, {}), doc);
    EXPECT_TRUE(remove_stopwords(Document{{"a"}}, {"a"}).tokens.empty());
}

TEST(Stopwords, MissingFileIsConfigError) {
    EXPECT_THROW(load_stoplist("/nonexistent/stopwords.txt"), ConfigError);
}

TEST(Stopwords, LoadsOneWordPerLine) {
    auto path = temp_path("stop.txt");
    std::ofstream(path) << "ու\r\nԵՎ\n\n  եւ  \n";
    auto s = load_stoplist(path);
    EXPECT_EQ(s, (StopList{"ու", "եվ", "եւ"}));
    std::filesystem::remove(path);
}

TEST(Labeled, ParsesJsonLines) {
    std::istringstream in("{\"label\": \"sport\", \"text\": \"Goal! 2 goals.\"}\n\n{\"label\":\"art\",\"text\":\"\"}\n");
    auto docs = read_labeled_corpus(in);
    ASSERT_EQ(docs.size(), 2u);
    EXPECT_EQ(docs[0].label, "sport");
    EXPECT_EQ(docs[0].tokens, (std::vector<std::string>{"goal", "goals"}));
    EXPECT_TRUE(docs[1].tokens.empty());
}

TEST(Labeled, RejectsEmptyLabelAndBadJson) {
    std::istringstream empty_label("{\"label\": \"\", \"text\": \"x\"}\n");
    EXPECT_THROW(read_labeled_corpus(empty_label), ParseError);
    std::istringstream bad("{\"label\": \"a\", \"text\": \"x\"}\nnot json\n");
    try {
        read_labeled_corpus(bad);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(Conllu, ReadsFormUposFeats) {
    std::istringstream in("# sent_id = 1\n"
                          "1-2\tfoo\t_\t_\t_\t_\t_\t_\t_\t_\n"
                          "1\tգիրքը\tգիրք\tNOUN\t_\tCase=Nom\t2\tnsubj\t_\t_\n"
                          "2\tկա\tլինել\tVERB\t_\t_\t0\troot\t_\t_\n"
                          "\n"
                          "1\tԱյո\tայո\tINTJ\t_\t_\t0\troot\t_\t_\n"
                          "1.1\tx\t_\tX\t_\t_\t_\t_\t_\t_\n");
    auto s = read_conllu(in);
    ASSERT_EQ(s.size(), 2u);
    ASSERT_EQ(s[0].tokens.size(), 2u);
    EXPECT_EQ(s[0].tokens[0], (ConlluToken{"գիրքը", "NOUN", "Case=Nom"}));
    EXPECT_EQ(s[0].tokens[1], (ConlluToken{"կա", "VERB", "_"}));
    ASSERT_EQ(s[1].tokens.size(), 1u);
}

TEST(Conllu, MalformedLineReportsLineNumber) {
    std::istringstream in("# c\n1\ta\tb\n");
    try {
        read_conllu(in);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(Conllu, RoundTripThroughWriter) {
    std::vector<ConlluSentence> sents{
        {{{"Ես", "PRON", "Case=Nom|Number=Sing|Person=1"}, {"գնացի", "VERB", "Aspect=Perf|Mood=Ind"}}},
        {{{"։", "PUNCT", "_"}}}};
    std::stringstream buf;
    write_conllu(buf, sents);
    EXPECT_EQ(read_conllu(buf), sents);
}

TEST(Split, SizesFollowRounding) {
    std::vector<int> items(10);
    std::iota(items.begin(), items.end(), 0);
    auto [a, b] = split_random(items, 0.2, 7);
    EXPECT_EQ(a.size(), 8u);
    EXPECT_EQ(b.size(), 2u);
}

TEST(Split, DeterministicAndPartition) {
    std::vector<int> items(37);
    std::iota(items.begin(), items.end(), 0);
    auto p1 = split_random(items, 0.3, 99);
    auto p2 = split_random(items, 0.3, 99);
    EXPECT_EQ(p1, p2);
    std::multiset<int> all(p1.first.begin(), p1.first.end());
    all.insert(p1.second.begin(), p1.second.end());
    EXPECT_EQ(all, std::multiset<int>(items.begin(), items.end()));
}

TEST(Split, FixedSizesAcrossSeeds) {
    std::vector<int> items{0, 1, 2, 3, 4};
    std::set<std::vector<int>> distinct;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto [a, b] = split_random(items, 0.2, seed);
        EXPECT_EQ(a.size(), 4u);
        EXPECT_EQ(b.size(), 1u);
        distinct.insert(b);
    }
    EXPECT_GT(distinct.size(), 1u);
}

TEST(Split, ComplementaryFractionsMirrorSizes) {
    std::vector<int> items(23);
    std::iota(items.begin(), items.end(), 0);
    for (double f : {0.1, 0.25, 0.4}) {
        auto [a, b] = split_random(items, f, 5);
        auto [a2, b2] = split_random(items, 1.0 - f, 5);
        EXPECT_EQ(a.size(), b2.size());
        EXPECT_EQ(b.size(), a2.size());
    }
}

TEST(Split, BadArguments) {
    std::vector<int> items{1, 2, 3};
    EXPECT_THROW(split_random(items, 0.0, 1), ArgumentError);
    EXPECT_THROW(split_random(items, 1.0, 1), ArgumentError);
    EXPECT_THROW(split_random(std::vector<int>{}, 0.5, 1), ArgumentError);
}
