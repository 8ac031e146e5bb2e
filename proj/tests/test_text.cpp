#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "gpas/errors.hpp"
#include "gpas/text.hpp"

using namespace gpas;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
    fs::path dir = fs::temp_directory_path() / ("gpas_text_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::vector<std::string>> sentences(std::initializer_list<const char *> raw) {
    std::vector<std::vector<std::string>> out;
    for (const char *s : raw) out.push_back(normalize_text(s));
    return out;
}

RawRecord make_record(const std::string &id, std::size_t segments, std::size_t dim) {
    RawRecord r;
    r.id = id;
    for (std::size_t i = 0; i < segments; ++i)
        r.segments.push_back({"a man runs", std::vector<double>(dim, 0.5 * static_cast<double>(i)), std::nullopt});
    r.reference = "a man runs";
    return r;
}

} // namespace

TEST(Normalize, Examples) {
    EXPECT_EQ(normalize_text("A man, RUNS."), (std::vector<std::string>{"a", "man", "runs"}));
    EXPECT_TRUE(normalize_text("").empty());
    EXPECT_TRUE(normalize_text("123 !!").empty());
    EXPECT_EQ(normalize_text("  tab\tsep\nline "), (std::vector<std::string>{"tab", "sep", "line"}));
}

TEST(Vocab, CountsAndThreshold) {
    const auto v = Vocabulary::build(sentences({"a a a", "a b"}));
    ASSERT_TRUE(v.find("a").has_value());
    EXPECT_EQ(v.count(*v.find("a")), 4u);
    EXPECT_FALSE(v.find("b").has_value());
    EXPECT_EQ(v.id("b"), token::unk);

    const auto three = Vocabulary::build(sentences({"x y", "x", "x"}));
    EXPECT_TRUE(three.find("x").has_value());
    EXPECT_FALSE(three.find("y").has_value());
}

TEST(Vocab, EmptyCorpusIsReservedOnly) {
    const auto v = Vocabulary::build({});
    EXPECT_EQ(v.size(), token::reserved_count);
    for (TokenId i = 0; i < token::reserved_count; ++i) EXPECT_EQ(v.token(i), token::names[i]);
}

TEST(Vocab, OrderIsCountDescThenTokenAsc) {
    const auto v = Vocabulary::build(sentences({"b b b c c c c a a a"}));
    EXPECT_EQ(v.token(5), "c");
    EXPECT_EQ(v.token(6), "a");
    EXPECT_EQ(v.token(7), "b");
    EXPECT_EQ(Vocabulary::build(sentences({"b b b c c c c a a a"})), v);
}

TEST(Vocab, SaveLoadRoundTrip) {
    const auto dir = scratch("vocab");
    const auto v = Vocabulary::build(sentences({"a a a b b b c"}));
    v.save(dir / "vocab.tsv");
    EXPECT_EQ(Vocabulary::load(dir / "vocab.tsv"), v);
    std::ofstream(dir / "bad.tsv") << "x\t3\n";
    EXPECT_ANY_THROW(Vocabulary::load(dir / "bad.tsv"));
}

TEST(EncodeFixed, PadTruncateEmpty) {
    const auto v = Vocabulary::build(sentences({"a a a man man man"}));
    const std::vector<std::string> am{"a", "man"};
    EXPECT_EQ(encode_fixed(am, v, 5),
              (std::vector<TokenId>{v.id("a"), v.id("man"), token::eos, token::blank, token::blank}));

    std::vector<std::string> long_sentence(30, "a");
    const auto ids = encode_fixed(long_sentence, v, 25);
    ASSERT_EQ(ids.size(), 25u);
    for (std::size_t i = 0; i < 24; ++i) EXPECT_EQ(ids[i], v.id("a"));
    EXPECT_EQ(ids[24], token::eos);

    EXPECT_EQ(encode_fixed({}, v, 3), (std::vector<TokenId>{token::eos, token::blank, token::blank}));
    const std::vector<std::string> oov{"zebra"};
    EXPECT_EQ(encode_fixed(oov, v, 2), (std::vector<TokenId>{token::unk, token::eos}));
}

TEST(EncodeFixed, DecodeRoundTripUpToTruncation) {
    const auto v = Vocabulary::build(sentences({"a a a man man man runs runs runs"}));
    const std::vector<std::string> s{"a", "man", "runs", "a", "man"};
    for (std::size_t L = 1; L <= 8; ++L) {
        const auto ids = encode_fixed(s, v, L);
        EXPECT_EQ(ids.size(), L);
        const auto back = decode_tokens(ids, v);
        const std::size_t keep = std::min(s.size(), L - 1);
        EXPECT_EQ(back, std::vector<std::string>(s.begin(), s.begin() + static_cast<long>(keep)));
    }
}

TEST(LossMask, MaskedAndUnmasked) {
    const std::vector<TokenId> ref{7, 8, token::eos, token::blank, token::blank};
    EXPECT_EQ(loss_mask(ref, true), (std::vector<double>{1, 1, 1, 0, 0}));
    EXPECT_EQ(loss_mask(ref, false), (std::vector<double>{1, 1, 1, 1, 1}));
}

TEST(Corpus, WellFormedRoundTrip) {
    const auto dir = scratch("corpus");
    const std::vector<RawRecord> recs{make_record("r0", 2, 3), make_record("r1", 2, 3)};
    write_raw_corpus(dir / "c.jsonl", recs);
    const auto raw = read_raw_corpus(dir / "c.jsonl");
    ASSERT_EQ(raw.size(), 2u);
    EXPECT_EQ(raw[1].segments[1].visual, recs[1].segments[1].visual);
    const auto v = build_vocab(raw);
    const auto split = load_corpus(dir / "c.jsonl", v, {2, 4, 3});
    ASSERT_EQ(split.records.size(), 2u);
    EXPECT_EQ(split.records[0].segments[0].sentence.size(), 4u);
    EXPECT_EQ(split.records[0].reference,
              (std::vector<TokenId>{v.id("a"), v.id("man"), v.id("runs"), token::eos}));
}

TEST(Corpus, ValidationErrors) {
    const auto dir = scratch("corpus_bad");
    const std::vector<RawRecord> short_rec{make_record("r0", 1, 3)};
    write_raw_corpus(dir / "short.jsonl", short_rec);
    const Vocabulary v;
    EXPECT_THROW(load_corpus(dir / "short.jsonl", v, {2, 4, 3}), SchemaError);

    const std::vector<RawRecord> dim_rec{make_record("r0", 2, 4)};
    write_raw_corpus(dir / "dim.jsonl", dim_rec);
    EXPECT_THROW(load_corpus(dir / "dim.jsonl", v, {2, 4, 3}), SchemaError);

    std::ofstream(dir / "nonnum.jsonl")
        << R"({"id":"x","segments":[{"sentence":"a","visual":[1,"q"]}],"reference":"a"})" << '\n';
    try {
        read_raw_corpus(dir / "nonnum.jsonl");
        FAIL();
    } catch (const ParseError &e) {
        EXPECT_EQ(e.line(), 1u);
    }

    std::ofstream(dir / "broken.jsonl") << to_json_line(make_record("ok", 1, 1)) << "\n{not json\n";
    try {
        read_raw_corpus(dir / "broken.jsonl");
        FAIL();
    } catch (const ParseError &e) {
        EXPECT_EQ(e.line(), 2u);
    }

    const std::vector<RawRecord> dup{make_record("same", 2, 3), make_record("same", 2, 3)};
    EXPECT_THROW(encode_corpus(dup, v, {2, 4, 3}), SchemaError);
}
