#include <catch2/catch_amalgamated.hpp>

#include "evqa/dataset.hpp"
#include "evqa/text.hpp"

using namespace evqa;

namespace {

std::vector<std::string> texts(const std::vector<TokenSpan>& toks) {
    std::vector<std::string> out;
    for (const auto& t : toks) out.push_back(t.text);
    return out;
}

std::vector<std::string> token_texts(const AlignedSequence& seq) {
    std::vector<std::string> out;
    for (const auto& t : seq.tokens) out.push_back(t.text);
    return out;
}

Vocab vocab_with_prefixes(const std::vector<std::string>& corpus) {
    Vocab v = Vocab::build(corpus, 1);
    for (int t = 0; t < kNumRelationTypes; ++t)
        v.add_token(relation_prefix(static_cast<RelationType>(t)));
    return v;
}

}  // namespace

TEST_CASE("tokenizer lowercases and splits punctuation with offsets", "[text]") {
    const auto toks = tokenize("DNA testing,");
    REQUIRE(texts(toks) == std::vector<std::string>{"dna", "testing", ","});
    REQUIRE(toks[0].begin == 0);
    REQUIRE(toks[0].end == 3);
    REQUIRE(toks[1].begin == 4);
    REQUIRE(toks[1].end == 11);
    REQUIRE(toks[2].begin == 11);
    REQUIRE(toks[2].end == 12);

    REQUIRE(tokenize("").empty());
}

TEST_CASE("detokenize then retokenize is stable", "[text]") {
    const auto toks = tokenize("The storm, it flooded -- badly.");
    const std::string joined = detokenize(texts(toks));
    REQUIRE(texts(tokenize(joined)) == texts(toks));
}

TEST_CASE("reserved separator characters never become corpus tokens", "[text]") {
    for (const auto& t : tokenize("a: b; c\nd")) {
        REQUIRE(t.text != ":");
        REQUIRE(t.text != ";");
        REQUIRE(t.text != "\n");
    }
}

TEST_CASE("vocabulary respects min_count and always holds specials", "[text]") {
    Vocab v = Vocab::build({"a a b"}, 2);
    REQUIRE(v.contains("a"));
    REQUIRE_FALSE(v.contains("b"));
    REQUIRE(v.id("b") == Vocab::kUnk);
    REQUIRE(v.token(Vocab::kPad) == "<pad>");
    REQUIRE(v.token(Vocab::kBos) == "<s>");
    REQUIRE(v.token(Vocab::kEos) == "</s>");
    REQUIRE(v.token(Vocab::kPrefixSep) == ":");
    REQUIRE(v.token(Vocab::kNewline) == "\n");
    REQUIRE(v.token(Vocab::kAnswerSep) == ";");

    REQUIRE_THROWS_AS(Vocab::build({}, 1), DataError);

    Vocab v1 = Vocab::build({"x y z z", "w x"}, 1);
    Vocab v2 = Vocab::build({"x y z z", "w x"}, 1);
    REQUIRE(v1.tokens() == v2.tokens());
}

TEST_CASE("generative template matches the worked example", "[text]") {
    Vocab v = vocab_with_prefixes({"why ? because ."});
    const AlignedSequence seq =
        format_generative(RelationType::conditional, "Why?", "Because.", v);
    REQUIRE(token_texts(seq) == std::vector<std::string>{"conditional", ":", "why", "?", "\n",
                                                         "because", ".", "</s>"});
    REQUIRE(seq.segment_indices(Segment::question) == std::vector<int>{2, 3});
    REQUIRE(seq.segment_indices(Segment::paragraph) == std::vector<int>{5, 6});

    const AlignedSequence ablated = format_generative(std::nullopt, "Why?", "Because.", v);
    REQUIRE(token_texts(ablated) ==
            std::vector<std::string>{"why", "?", "\n", "because", ".", "</s>"});

    REQUIRE_THROWS_AS(format_generative(std::nullopt, "", "p", v), ContractError);
}

TEST_CASE("extractive template matches the worked example", "[text]") {
    Vocab v = vocab_with_prefixes({"why ? rain ."});
    const AlignedSequence seq = format_extractive(RelationType::causal, "Why?", "Rain.", v);
    REQUIRE(token_texts(seq) == std::vector<std::string>{"<s>", "causal", ":", "why", "?",
                                                         "</s>", "</s>", "rain", "."});
    const auto pidx = seq.segment_indices(Segment::paragraph);
    REQUIRE(pidx == std::vector<int>{7, 8});
    REQUIRE(seq.tokens[pidx[0]].src_begin == 0);
    REQUIRE(seq.tokens[pidx[0]].src_end == 4);

    const AlignedSequence ablated = format_extractive(std::nullopt, "Why?", "Rain.", v);
    REQUIRE(token_texts(ablated) ==
            std::vector<std::string>{"<s>", "why", "?", "</s>", "</s>", "rain", "."});
}

TEST_CASE("both templates share question and paragraph token subsequences", "[text]") {
    Vocab v = vocab_with_prefixes({"what caused the fire ? the barn burned down ."});
    const std::string q = "what caused the fire ?";
    const std::string p = "the barn burned down .";
    const auto gen = format_generative(RelationType::causal, q, p, v);
    const auto ext = format_extractive(RelationType::causal, q, p, v);
    auto segment_tokens = [](const AlignedSequence& s, Segment seg) {
        std::vector<std::string> out;
        for (int i : s.segment_indices(seg)) out.push_back(s.tokens[i].text);
        return out;
    };
    REQUIRE(segment_tokens(gen, Segment::question) == segment_tokens(ext, Segment::question));
    REQUIRE(segment_tokens(gen, Segment::paragraph) == segment_tokens(ext, Segment::paragraph));
}

TEST_CASE("span alignment follows the intersection rule", "[text]") {
    const std::string p = "kopp linked through dna testing to a strand";
    Vocab v = vocab_with_prefixes({p});
    const AlignedSequence seq = format_generative(std::nullopt, "why ?", p, v);

    const int tb = int(p.find("testing"));
    auto idx = align_span(seq, {tb, tb + 7}, Segment::paragraph);
    REQUIRE(idx.size() == 1);
    REQUIRE(seq.tokens[idx[0]].text == "testing");

    const int lb = int(p.find("linked"));
    const int de = int(p.find("dna")) + 3;
    auto multi = align_span(seq, {lb, de}, Segment::paragraph);
    REQUIRE(multi.size() == 3);
    for (size_t i = 1; i < multi.size(); ++i) REQUIRE(multi[i] == multi[i - 1] + 1);

    // half-token overlap still selects the token
    auto half = align_span(seq, {tb + 3, tb + 7}, Segment::paragraph);
    REQUIRE(half == idx);

    REQUIRE_THROWS_AS(align_span(seq, {-1, 4}, Segment::paragraph), DataError);
    REQUIRE_THROWS_AS(align_span(seq, {0, int(p.size()) + 5}, Segment::paragraph), DataError);
}

TEST_CASE("alignment locates every synthetic trigger as a matching token", "[text]") {
    const auto data = synth_generate(60, kDefaultTypeProportions, 17);
    std::vector<std::string> corpus;
    for (const auto& inst : data) {
        corpus.push_back(inst.question);
        corpus.push_back(inst.paragraph);
    }
    Vocab v = vocab_with_prefixes(corpus);
    for (const auto& inst : data) {
        const auto seq = format_generative(inst.type, inst.question, inst.paragraph, v);
        for (const auto& ev : inst.question_events) {
            auto idx = align_span(seq, {ev.begin, ev.end}, Segment::question);
            std::string joined;
            for (int i : idx) joined += seq.tokens[i].text;
            REQUIRE(joined == ev.text);
        }
        for (const auto& ev : inst.answer_events) {
            auto idx = align_span(seq, {ev.begin, ev.end}, Segment::paragraph);
            REQUIRE(seq.tokens[idx[0]].text == ev.text);
        }
        std::vector<int> cover(inst.paragraph.size(), 0);
        for (const auto& tok : seq.tokens) {
            if (tok.segment != Segment::paragraph) continue;
            for (int c = tok.src_begin; c < tok.src_end; ++c) cover[c]++;
        }
        for (size_t c = 0; c < inst.paragraph.size(); ++c) {
            const char ch = inst.paragraph[c];
            if (std::isspace(static_cast<unsigned char>(ch)) || is_separator_char(ch)) {
                REQUIRE(cover[c] == 0);
            } else {
                REQUIRE(cover[c] == 1);
            }
        }
    }
}

TEST_CASE("overlong paragraphs truncate and spans past the cut fail to align", "[text]") {
    std::string p;
    for (int i = 0; i < 300; ++i) p += "word ";
    p += "tail";
    Vocab v = vocab_with_prefixes({p, "why ?"});
    const AlignedSequence seq = format_generative(std::nullopt, "why ?", p, v, 64);
    REQUIRE(seq.truncated);
    REQUIRE(seq.length() <= 64);
    const int tb = int(p.size()) - 4;
    REQUIRE_THROWS_AS(align_span(seq, {tb, tb + 4}, Segment::paragraph), DataError);
}
