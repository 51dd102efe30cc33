#pragma once

// Tokenization, vocabulary, input assembly for the generative and extractive
// settings, and alignment of character-level event spans to token positions.

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "evqa/errors.hpp"
#include "evqa/relation.hpp"

namespace evqa {

struct TokenSpan {
    std::string text;  // lowercased surface
    int begin = 0;     // character offsets into the source text, end exclusive
    int end = 0;
};

// The reserved separator characters belong to the input templates, never to
// corpus text; the tokenizer treats them like whitespace so corpus
// tokenization cannot produce a special token.
inline bool is_separator_char(char ch) { return ch == ':' || ch == ';' || ch == '\n'; }

// Lowercased word/punctuation tokens with source character spans. Alphanumeric
// runs form words; any other printable character is its own token.
inline std::vector<TokenSpan> tokenize(const std::string& text) {
    std::vector<TokenSpan> out;
    const int n = int(text.size());
    int i = 0;
    while (i < n) {
        const unsigned char ch = static_cast<unsigned char>(text[i]);
        if (std::isspace(ch) || is_separator_char(text[i])) {
            ++i;
            continue;
        }
        if (std::isalnum(ch)) {
            int j = i;
            std::string word;
            while (j < n && std::isalnum(static_cast<unsigned char>(text[j]))) {
                word += char(std::tolower(static_cast<unsigned char>(text[j])));
                ++j;
            }
            out.push_back({std::move(word), i, j});
            i = j;
        } else {
            out.push_back({std::string(1, text[i]), i, i + 1});
            ++i;
        }
    }
    return out;
}

inline std::string detokenize(const std::vector<std::string>& tokens) {
    std::string s;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) s += ' ';
        s += tokens[i];
    }
    return s;
}

class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;   // "<s>"
    static constexpr int kEos = 3;   // "</s>"
    static constexpr int kPrefixSep = 4;  // ":"
    static constexpr int kNewline = 5;    // "\n"
    static constexpr int kAnswerSep = 6;  // ";"

    Vocab() {
        for (const char* s : {"<pad>", "<unk>", "<s>", "</s>", ":", "\n", ";"}) add_raw(s);
    }

    // Frequency-filtered vocabulary; ids are assigned by descending count then
    // lexicographic order, so identical corpora produce identical tables.
    static Vocab build(const std::vector<std::string>& corpus, int min_count) {
        if (corpus.empty()) throw DataError("build_vocab: empty corpus");
        std::map<std::string, long> counts;
        for (const auto& text : corpus)
            for (const auto& tok : tokenize(text)) ++counts[tok.text];
        std::vector<std::pair<std::string, long>> entries(counts.begin(), counts.end());
        std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        Vocab v;
        for (const auto& [tok, count] : entries)
            if (count >= min_count) v.add_token(tok);
        return v;
    }

    int add_token(const std::string& tok) {
        auto it = ids_.find(tok);
        if (it != ids_.end()) return it->second;
        return add_raw(tok);
    }

    int id(const std::string& tok) const {
        auto it = ids_.find(tok);
        return it == ids_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& tok) const { return ids_.count(tok) > 0; }

    const std::string& token(int id) const {
        if (id < 0 || id >= int(tokens_.size()))
            throw ShapeError("vocab: id " + std::to_string(id) + " out of range");
        return tokens_[id];
    }

    int size() const { return int(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    static Vocab from_tokens(const std::vector<std::string>& tokens) {
        Vocab v;
        for (size_t i = 7; i < tokens.size(); ++i) v.add_token(tokens[i]);
        if (v.tokens_ != tokens) throw DataError("vocab: token list is not a valid table");
        return v;
    }

private:
    int add_raw(const std::string& tok) {
        const int id = int(tokens_.size());
        tokens_.push_back(tok);
        ids_.emplace(tok, id);
        return id;
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

enum class Segment { special, prefix, question, paragraph };

struct AlignedToken {
    int id = Vocab::kPad;
    std::string text;
    Segment segment = Segment::special;
    int src_begin = -1;  // offsets into the owning question/paragraph text
    int src_end = -1;
};

struct AlignedSequence {
    std::vector<AlignedToken> tokens;
    std::string question;
    std::string paragraph;
    bool truncated = false;

    int length() const { return int(tokens.size()); }

    std::vector<int> ids() const {
        std::vector<int> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) out.push_back(t.id);
        return out;
    }

    std::vector<int> segment_indices(Segment seg) const {
        std::vector<int> out;
        for (int i = 0; i < int(tokens.size()); ++i)
            if (tokens[i].segment == seg) out.push_back(i);
        return out;
    }
};

namespace detail {

inline void append_special(AlignedSequence& seq, int id, const std::string& text) {
    seq.tokens.push_back({id, text, Segment::special, -1, -1});
}

inline void append_text(AlignedSequence& seq, const Vocab& vocab, const std::string& text,
                        Segment seg, int budget) {
    for (const auto& tok : tokenize(text)) {
        if (int(seq.tokens.size()) >= budget) {
            seq.truncated = true;
            return;
        }
        seq.tokens.push_back({vocab.id(tok.text), tok.text, seg, tok.begin, tok.end});
    }
}

}  // namespace detail

// Generative template: [t ":"] q "\n" p "</s>". The prefix is dropped when
// `type` is absent (the -prefix ablation).
inline AlignedSequence format_generative(std::optional<RelationType> type,
                                         const std::string& question,
                                         const std::string& paragraph, const Vocab& vocab,
                                         int max_len = 192) {
    if (question.empty() || paragraph.empty())
        throw ContractError("format_generative: question and paragraph must be non-empty");
    AlignedSequence seq;
    seq.question = question;
    seq.paragraph = paragraph;
    if (type) {
        detail::append_text(seq, vocab, relation_prefix(*type), Segment::prefix, max_len);
        detail::append_special(seq, Vocab::kPrefixSep, ":");
    }
    detail::append_text(seq, vocab, question, Segment::question, max_len);
    detail::append_special(seq, Vocab::kNewline, "\n");
    detail::append_text(seq, vocab, paragraph, Segment::paragraph, max_len - 1);
    detail::append_special(seq, Vocab::kEos, "</s>");
    if (seq.length() > max_len)
        throw ShapeError("format_generative: formatted input exceeds max length");
    return seq;
}

// Extractive template: "<s>" [t ":"] q "</s>" "</s>" p.
inline AlignedSequence format_extractive(std::optional<RelationType> type,
                                         const std::string& question,
                                         const std::string& paragraph, const Vocab& vocab,
                                         int max_len = 192) {
    if (question.empty() || paragraph.empty())
        throw ContractError("format_extractive: question and paragraph must be non-empty");
    AlignedSequence seq;
    seq.question = question;
    seq.paragraph = paragraph;
    detail::append_special(seq, Vocab::kBos, "<s>");
    if (type) {
        detail::append_text(seq, vocab, relation_prefix(*type), Segment::prefix, max_len);
        detail::append_special(seq, Vocab::kPrefixSep, ":");
    }
    detail::append_text(seq, vocab, question, Segment::question, max_len);
    detail::append_special(seq, Vocab::kEos, "</s>");
    detail::append_special(seq, Vocab::kEos, "</s>");
    detail::append_text(seq, vocab, paragraph, Segment::paragraph, max_len);
    if (seq.length() > max_len)
        throw ShapeError("format_extractive: formatted input exceeds max length");
    return seq;
}

struct CharSpan {
    int begin = 0;
    int end = 0;  // exclusive
};

// Token indices whose source spans intersect the given character span.
// Intersection rather than containment, so off-by-one annotation boundaries
// still map to the intended tokens.
inline std::vector<int> align_span(const AlignedSequence& seq, CharSpan span, Segment seg) {
    const std::string& text = seg == Segment::question ? seq.question : seq.paragraph;
    if (span.begin < 0 || span.end > int(text.size()) || span.begin >= span.end)
        throw DataError("align_span: span [" + std::to_string(span.begin) + ", " +
                        std::to_string(span.end) + ") outside text of length " +
                        std::to_string(text.size()));
    std::vector<int> out;
    for (int i = 0; i < seq.length(); ++i) {
        const auto& t = seq.tokens[i];
        if (t.segment != seg || t.src_begin < 0) continue;
        if (t.src_begin < span.end && span.begin < t.src_end) out.push_back(i);
    }
    if (out.empty())
        throw DataError("align_span: span [" + std::to_string(span.begin) + ", " +
                        std::to_string(span.end) + ") aligned to zero tokens");
    return out;
}

inline std::vector<std::vector<int>> align_event_spans(const AlignedSequence& seq,
                                                       const std::vector<CharSpan>& spans,
                                                       Segment seg) {
    std::vector<std::vector<int>> out;
    out.reserve(spans.size());
    for (const auto& s : spans) out.push_back(align_span(seq, s, seg));
    return out;
}

}  // namespace evqa
