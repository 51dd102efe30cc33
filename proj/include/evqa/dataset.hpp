#pragma once

// Dataset ingestion and validation, the templated synthetic corpus
// generator, and stratified few-shot subsetting.
//
// File format: a UTF-8 JSON array of
//   { "id", "paragraph", "question", "type",
//     "answers": [ { "text", "start", "end" } ],
//     "events": { "question": [span], "answer": [span], "other": [span] } }
// where span = { "start", "end", "text" }. Question-role spans index into the
// question text, all other spans into the paragraph.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evqa/errors.hpp"
#include "evqa/relation.hpp"

namespace evqa {

struct EventSpan {
    int begin = 0;
    int end = 0;  // exclusive
    std::string text;
};

struct AnswerSpan {
    std::string text;
    int begin = 0;
    int end = 0;
};

struct QAInstance {
    std::string id;
    std::string paragraph;
    std::string question;
    RelationType type = RelationType::causal;
    std::vector<AnswerSpan> answers;
    std::vector<EventSpan> question_events;  // spans into the question
    std::vector<EventSpan> answer_events;    // spans into the paragraph
    std::vector<EventSpan> other_events;     // spans into the paragraph
};

// ESTER-reported share of questions per relation type.
inline constexpr std::array<double, kNumRelationTypes> kDefaultTypeProportions = {
    0.431, 0.213, 0.071, 0.156, 0.129};

inline void validate_instance(const QAInstance& inst) {
    auto fail = [&](const std::string& why) {
        throw DataError("instance '" + inst.id + "': " + why);
    };
    if (inst.paragraph.empty() || inst.question.empty()) fail("empty paragraph or question");
    if (inst.answers.empty()) fail("needs at least one answer");
    for (const auto& a : inst.answers) {
        if (a.begin < 0 || a.end > int(inst.paragraph.size()) || a.begin >= a.end)
            fail("answer span [" + std::to_string(a.begin) + ", " + std::to_string(a.end) +
                 ") out of paragraph range");
        if (inst.paragraph.substr(a.begin, a.end - a.begin) != a.text)
            fail("answer text does not match its paragraph slice");
    }
    if (inst.question_events.empty()) fail("question has no event span");
    auto check_span = [&](const EventSpan& s, const std::string& text, const char* where) {
        if (s.begin < 0 || s.end > int(text.size()) || s.begin >= s.end)
            fail(std::string(where) + " span out of range");
        if (text.substr(s.begin, s.end - s.begin) != s.text)
            fail(std::string(where) + " span text mismatch");
    };
    for (const auto& s : inst.question_events) check_span(s, inst.question, "question event");
    for (const auto& s : inst.other_events) check_span(s, inst.paragraph, "other event");
    for (const auto& s : inst.answer_events) {
        check_span(s, inst.paragraph, "answer event");
        bool inside = false;
        for (const auto& a : inst.answers)
            inside = inside || (s.begin >= a.begin && s.end <= a.end);
        if (!inside) fail("answer event trigger lies outside every answer span");
    }
}

namespace detail {

inline nlohmann::json span_to_json(const EventSpan& s) {
    return {{"start", s.begin}, {"end", s.end}, {"text", s.text}};
}

inline EventSpan span_from_json(const nlohmann::json& j) {
    return {j.at("start").get<int>(), j.at("end").get<int>(), j.at("text").get<std::string>()};
}

}  // namespace detail

inline nlohmann::json instance_to_json(const QAInstance& inst) {
    nlohmann::json answers = nlohmann::json::array();
    for (const auto& a : inst.answers)
        answers.push_back({{"text", a.text}, {"start", a.begin}, {"end", a.end}});
    nlohmann::json ev_q = nlohmann::json::array(), ev_a = nlohmann::json::array(),
                   ev_o = nlohmann::json::array();
    for (const auto& s : inst.question_events) ev_q.push_back(detail::span_to_json(s));
    for (const auto& s : inst.answer_events) ev_a.push_back(detail::span_to_json(s));
    for (const auto& s : inst.other_events) ev_o.push_back(detail::span_to_json(s));
    return {{"id", inst.id},
            {"paragraph", inst.paragraph},
            {"question", inst.question},
            {"type", relation_name(inst.type)},
            {"answers", answers},
            {"events", {{"question", ev_q}, {"answer", ev_a}, {"other", ev_o}}}};
}

inline QAInstance instance_from_json(const nlohmann::json& j) {
    QAInstance inst;
    inst.id = j.at("id").get<std::string>();
    inst.paragraph = j.at("paragraph").get<std::string>();
    inst.question = j.at("question").get<std::string>();
    const std::string type_str = j.at("type").get<std::string>();
    auto type = parse_relation(type_str);
    if (!type)
        throw DataError("instance '" + inst.id + "': unknown relation type '" + type_str + "'");
    inst.type = *type;
    for (const auto& a : j.at("answers"))
        inst.answers.push_back({a.at("text").get<std::string>(), a.at("start").get<int>(),
                                a.at("end").get<int>()});
    const auto& ev = j.at("events");
    for (const auto& s : ev.at("question")) inst.question_events.push_back(detail::span_from_json(s));
    for (const auto& s : ev.at("answer")) inst.answer_events.push_back(detail::span_from_json(s));
    for (const auto& s : ev.at("other")) inst.other_events.push_back(detail::span_from_json(s));
    return inst;
}

struct LoadReport {
    std::vector<std::string> warnings;
    int skipped = 0;
};

using InstanceParser = std::function<QAInstance(const nlohmann::json&)>;

// `parser` is the adapter point for foreign serializations: swap the field
// mapping without touching validation.
inline std::vector<QAInstance> load_dataset(const std::string& path, bool strict = true,
                                            LoadReport* report = nullptr,
                                            const InstanceParser& parser = instance_from_json) {
    std::ifstream in(path);
    if (!in) throw DataError("load_dataset: cannot open '" + path + "'");
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_dataset: parse failure in '" + path + "': " + e.what());
    }
    if (!root.is_array()) throw DataError("load_dataset: top level must be a JSON array");
    std::vector<QAInstance> out;
    for (const auto& item : root) {
        try {
            QAInstance inst = parser(item);
            validate_instance(inst);
            out.push_back(std::move(inst));
        } catch (const std::exception& e) {
            if (strict) throw;
            if (report) {
                report->warnings.push_back(e.what());
                ++report->skipped;
            }
        }
    }
    return out;
}

inline void save_dataset(const std::vector<QAInstance>& instances, const std::string& path) {
    nlohmann::json root = nlohmann::json::array();
    for (const auto& inst : instances) root.push_back(instance_to_json(inst));
    std::ofstream out(path);
    if (!out) throw DataError("save_dataset: cannot write '" + path + "'");
    out << root.dump(1) << "\n";
}

// ---------------------------------------------------------------------------
// Type allocation helpers
// ---------------------------------------------------------------------------

// Largest-remainder rounding of n into per-type counts.
inline std::array<int, kNumRelationTypes> largest_remainder_counts(
    int n, const std::array<double, kNumRelationTypes>& proportions) {
    double sum = 0.0;
    for (double p : proportions) {
        if (p < 0) throw ConfigError("type proportions must be non-negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("type proportions must sum to 1, got " + std::to_string(sum));
    std::array<int, kNumRelationTypes> counts{};
    std::array<double, kNumRelationTypes> remainders{};
    int assigned = 0;
    for (int t = 0; t < kNumRelationTypes; ++t) {
        const double exact = n * proportions[t];
        counts[t] = int(exact);
        remainders[t] = exact - counts[t];
        assigned += counts[t];
    }
    std::array<int, kNumRelationTypes> order = {0, 1, 2, 3, 4};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return remainders[a] > remainders[b]; });
    for (int i = 0; assigned < n; ++i, ++assigned) counts[order[i % kNumRelationTypes]]++;
    return counts;
}

// Interleaves per-type counts so every prefix stays within one instance of
// proportional; used for corpus ordering and nested few-shot subsets.
inline std::vector<RelationType> balanced_type_sequence(
    const std::array<int, kNumRelationTypes>& counts) {
    long total = 0;
    for (int c : counts) total += c;
    std::array<long, kNumRelationTypes> alloc{};
    std::vector<RelationType> seq;
    seq.reserve(total);
    for (long m = 1; m <= total; ++m) {
        int best = -1;
        double best_deficit = -1e300;
        for (int t = 0; t < kNumRelationTypes; ++t) {
            if (alloc[t] >= counts[t]) continue;
            const double deficit = double(m) * counts[t] / double(total) - double(alloc[t]);
            if (deficit > best_deficit) {
                best_deficit = deficit;
                best = t;
            }
        }
        alloc[best]++;
        seq.push_back(static_cast<RelationType>(best));
    }
    return seq;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

struct SynthOptions {
    int distractor_rate = 4;  // other-role triggers per paragraph
};

namespace synth {

struct VerbEntry {
    const char* verb;   // past-tense event trigger
    const char* alias;  // nominal mention used by co-reference paragraphs
};

inline constexpr std::array<VerbEntry, 48> kVerbs = {{
    {"erupted", "eruption"},       {"collapsed", "collapse"},
    {"negotiated", "negotiation"}, {"protested", "protest"},
    {"flooded", "flooding"},       {"evacuated", "evacuation"},
    {"merged", "merger"},          {"resigned", "resignation"},
    {"invaded", "invasion"},       {"retreated", "retreat"},
    {"voted", "vote"},             {"marched", "march"},
    {"celebrated", "celebration"}, {"sank", "sinking"},
    {"landed", "landing"},         {"launched", "launch"},
    {"crashed", "crash"},          {"recovered", "recovery"},
    {"rebelled", "rebellion"},     {"surrendered", "surrender"},
    {"expanded", "expansion"},     {"declined", "decline"},
    {"migrated", "migration"},     {"elected", "election"},
    {"arrested", "arrest"},        {"rescued", "rescue"},
    {"burned", "burning"},         {"exploded", "explosion"},
    {"signed", "signing"},         {"departed", "departure"},
    {"arrived", "arrival"},        {"struck", "strike"},
    {"settled", "settlement"},     {"escaped", "escape"},
    {"trained", "training"},       {"tested", "testing"},
    {"gathered", "gathering"},     {"divided", "division"},
    {"promoted", "promotion"},     {"banned", "ban"},
    {"opened", "opening"},         {"closed", "closure"},
    {"repaired", "repairs"},       {"funded", "funding"},
    {"debated", "debate"},         {"audited", "audit"},
    {"toured", "tour"},            {"paraded", "parade"},
}};

inline constexpr std::array<const char*, 24> kNouns = {
    "council", "storm",  "army",    "committee", "factory", "village", "company", "crowd",
    "river",   "parliament", "airline", "union",  "museum",  "harbor",  "festival", "bank",
    "clinic",  "school", "mine",    "port",      "senate",  "bridge",  "market",  "theater"};

struct Word {
    std::string text;
    int role = 0;          // 0 none, 1 question trigger, 2 answer trigger, 3 other trigger
    int answer_index = -1; // for role 2
};

struct Sentence {
    std::vector<Word> words;
    // answer segments as [first_word, last_word] inclusive, per answer index
    std::vector<std::array<int, 3>> answer_segments;  // {answer_index, first, last}
};

}  // namespace synth

// Deterministic templated instances. Paragraphs hold one relation-bearing
// sentence (two for co-reference) among `distractor_rate` single-event
// distractor sentences; questions carry a type-revealing cue phrase; answers
// are verbatim paragraph substrings around answer-role triggers.
inline std::vector<QAInstance> synth_generate(
    int n, const std::array<double, kNumRelationTypes>& proportions, std::uint64_t seed,
    const SynthOptions& options = {}) {
    if (n <= 0) throw ConfigError("synth_generate: n must be positive");
    const auto counts = largest_remainder_counts(n, proportions);
    const auto type_seq = balanced_type_sequence(counts);
    std::mt19937_64 rng(seed);

    auto pick_distinct = [&rng](int pool, int k) {
        std::vector<int> idx(pool);
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = 0; i < k; ++i) {
            std::uniform_int_distribution<int> pick(i, pool - 1);
            std::swap(idx[i], idx[pick(rng)]);
        }
        idx.resize(k);
        return idx;
    };

    std::vector<QAInstance> out;
    out.reserve(n);
    for (int index = 0; index < n; ++index) {
        const RelationType type = type_seq[index];
        QAInstance inst;
        inst.type = type;
        {
            std::ostringstream id;
            id << "synth-" << std::setw(6) << std::setfill('0') << index;
            inst.id = id.str();
        }

        int num_answers = 1;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        if (type == RelationType::subevent)
            num_answers = 3 + (unit(rng) < 0.3 ? 1 : 0);
        else if (type != RelationType::coreference)
            num_answers = 1 + (unit(rng) < 0.35 ? 1 : 0);

        const int num_distractors = options.distractor_rate;
        const auto verb_idx = pick_distinct(int(synth::kVerbs.size()),
                                            1 + num_answers + num_distractors);
        const auto noun_idx = pick_distinct(int(synth::kNouns.size()),
                                            1 + num_answers + num_distractors);
        const synth::VerbEntry vq = synth::kVerbs[verb_idx[0]];
        const std::string nq = synth::kNouns[noun_idx[0]];

        using synth::Sentence;
        using synth::Word;
        std::vector<Sentence> relation_unit;

        auto answer_clause = [&](Sentence& s, int ai) {
            const synth::VerbEntry va = synth::kVerbs[verb_idx[1 + ai]];
            const std::string na = synth::kNouns[noun_idx[1 + ai]];
            const int first = int(s.words.size());
            s.words.push_back({"the"});
            s.words.push_back({na});
            s.words.push_back({va.verb, 2, ai});
            s.answer_segments.push_back({ai, first, int(s.words.size()) - 1});
        };

        if (type == RelationType::coreference) {
            Sentence lead;
            lead.words = {{"the"}, {nq}, {Word{vq.verb, 3}}, {"."}};
            Sentence mention;
            mention.words = {{"people"}, {"later"}, {"called"}, {"it"}};
            const int first = int(mention.words.size());
            mention.words.push_back({"the"});
            mention.words.push_back({vq.alias, 2, 0});
            mention.answer_segments.push_back({0, first, int(mention.words.size()) - 1});
            mention.words.push_back({"."});
            relation_unit.push_back(std::move(lead));
            relation_unit.push_back(std::move(mention));
        } else {
            Sentence s;
            s.words = {{"the"}, {nq}, {Word{vq.verb, 3}}};
            if (type == RelationType::causal) {
                s.words.push_back({"because"});
            } else if (type == RelationType::conditional) {
                s.words.push_back({"only"});
                s.words.push_back({"if"});
            } else if (type == RelationType::counterfactual) {
                s.words.push_back({"rather"});
                s.words.push_back({"than"});
            } else {
                s.words.push_back({"while"});
            }
            for (int ai = 0; ai < num_answers; ++ai) {
                if (ai > 0) s.words.push_back({"and"});
                answer_clause(s, ai);
            }
            s.words.push_back({"."});
            relation_unit.push_back(std::move(s));
        }

        std::vector<Sentence> sentences;
        for (int k = 0; k < num_distractors; ++k) {
            const synth::VerbEntry vo = synth::kVerbs[verb_idx[1 + num_answers + k]];
            const std::string no = synth::kNouns[noun_idx[1 + num_answers + k]];
            Sentence s;
            s.words = {{"the"}, {no}, {Word{vo.verb, 3}}, {"."}};
            sentences.push_back(std::move(s));
        }
        std::uniform_int_distribution<int> slot(0, int(sentences.size()));
        const int insert_at = slot(rng);
        sentences.insert(sentences.begin() + insert_at, relation_unit.begin(),
                         relation_unit.end());

        // Emit the paragraph and record character offsets.
        std::vector<std::array<int, 2>> answer_bounds(num_answers, {INT32_MAX, -1});
        for (const auto& s : sentences) {
            std::vector<std::array<int, 2>> word_spans;
            for (const auto& w : s.words) {
                if (!inst.paragraph.empty()) inst.paragraph += ' ';
                const int b = int(inst.paragraph.size());
                inst.paragraph += w.text;
                const int e = int(inst.paragraph.size());
                word_spans.push_back({b, e});
                if (w.role == 1 || w.role == 3)
                    inst.other_events.push_back({b, e, w.text});
                else if (w.role == 2)
                    inst.answer_events.push_back({b, e, w.text});
            }
            for (const auto& seg : s.answer_segments) {
                answer_bounds[seg[0]][0] = word_spans[seg[1]][0];
                answer_bounds[seg[0]][1] = word_spans[seg[2]][1];
            }
        }
        for (int ai = 0; ai < num_answers; ++ai) {
            const auto [b, e] = answer_bounds[ai];
            inst.answers.push_back({inst.paragraph.substr(b, e - b), b, e});
        }

        // Question with a type-revealing cue phrase; its trigger is the same
        // verb that appears in the paragraph's relation sentence.
        std::vector<std::string> qwords;
        switch (type) {
            case RelationType::causal:
                qwords = {"what", "caused", "the", vq.verb, "?"};
                break;
            case RelationType::conditional:
                qwords = {"what", "if", "the", vq.verb, "is", "to", "happen", "?"};
                break;
            case RelationType::counterfactual:
                qwords = {"instead", "of", "what", "did", "the", vq.verb, "occur", "?"};
                break;
            case RelationType::subevent:
                qwords = {"what", "happened", "as", "part", "of", "the", vq.verb, "?"};
                break;
            case RelationType::coreference:
                qwords = {"which", "event", "refers", "to", "the", vq.verb, "?"};
                break;
        }
        for (const auto& w : qwords) {
            if (!inst.question.empty()) inst.question += ' ';
            const int b = int(inst.question.size());
            inst.question += w;
            if (w == vq.verb) inst.question_events.push_back({b, b + int(w.size()), w});
        }

        validate_instance(inst);
        out.push_back(std::move(inst));
    }
    return out;
}

// Type-stratified nested subsets: subset(m) is a prefix of subset(n) for
// m <= n under the same seed; every prefix stays within one instance of the
// corpus type shares.
inline std::vector<QAInstance> few_shot_subset(const std::vector<QAInstance>& train, int n,
                                               std::uint64_t seed) {
    if (n < 0 || n > int(train.size()))
        throw ConfigError("few_shot_subset: n = " + std::to_string(n) + " outside [0, " +
                          std::to_string(train.size()) + "]");
    if (n == 0) return {};
    std::array<std::vector<int>, kNumRelationTypes> by_type;
    for (int i = 0; i < int(train.size()); ++i)
        by_type[int(train[i].type)].push_back(i);
    std::mt19937_64 rng(seed);
    for (auto& ids : by_type) std::shuffle(ids.begin(), ids.end(), rng);

    std::array<int, kNumRelationTypes> counts{};
    for (int t = 0; t < kNumRelationTypes; ++t) counts[t] = int(by_type[t].size());
    const auto order = balanced_type_sequence(counts);

    std::array<int, kNumRelationTypes> used{};
    std::vector<QAInstance> out;
    out.reserve(n);
    for (int m = 0; m < n; ++m) {
        const int t = int(order[m]);
        out.push_back(train[by_type[t][used[t]++]]);
    }
    return out;
}

}  // namespace evqa
