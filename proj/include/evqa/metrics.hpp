#pragma once

// Multi-answer evaluation: pooled unigram token F1, HIT@1 (leftmost answer
// contains a gold answer event trigger), and exact match, with per-type and
// overall macro aggregation.
//
// All three metrics share one normalization pipeline: token normalization is
// lowercase with punctuation characters stripped; string normalization is
// lowercase, whitespace collapsed, leading/trailing punctuation stripped.

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "evqa/dataset.hpp"
#include "evqa/errors.hpp"
#include "evqa/relation.hpp"
#include "evqa/text.hpp"

namespace evqa {

inline std::string normalize_token(const std::string& tok) {
    std::string out;
    for (char ch : tok) {
        const unsigned char u = static_cast<unsigned char>(ch);
        if (std::ispunct(u)) continue;
        out += char(std::tolower(u));
    }
    return out;
}

// Normalized unigram tokens of a text; empty-after-normalization tokens drop.
inline std::vector<std::string> metric_tokens(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& t : tokenize(text)) {
        std::string norm = normalize_token(t.text);
        if (!norm.empty()) out.push_back(std::move(norm));
    }
    return out;
}

inline std::string normalize_answer(const std::string& text) {
    std::string lowered;
    for (char ch : text) lowered += char(std::tolower(static_cast<unsigned char>(ch)));
    // collapse whitespace runs
    std::string collapsed;
    bool in_ws = false;
    for (char ch : lowered) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            in_ws = true;
            continue;
        }
        if (in_ws && !collapsed.empty()) collapsed += ' ';
        in_ws = false;
        collapsed += ch;
    }
    size_t b = 0, e = collapsed.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(collapsed[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(collapsed[e - 1]))) --e;
    std::string trimmed = collapsed.substr(b, e - b);
    while (!trimmed.empty() && trimmed.back() == ' ') trimmed.pop_back();
    while (!trimmed.empty() && trimmed.front() == ' ') trimmed.erase(trimmed.begin());
    return trimmed;
}

// Pooled-multiset unigram F1 between all predicted and all gold answers.
inline double f1_token(const std::vector<std::string>& pred_answers,
                       const std::vector<std::string>& gold_answers) {
    std::unordered_map<std::string, int> pred_counts, gold_counts;
    long pred_total = 0, gold_total = 0;
    for (const auto& a : pred_answers)
        for (auto& t : metric_tokens(a)) {
            ++pred_counts[t];
            ++pred_total;
        }
    for (const auto& a : gold_answers)
        for (auto& t : metric_tokens(a)) {
            ++gold_counts[t];
            ++gold_total;
        }
    if (pred_total == 0 || gold_total == 0) return 0.0;
    long common = 0;
    for (const auto& [tok, c] : pred_counts) {
        auto it = gold_counts.find(tok);
        if (it != gold_counts.end()) common += std::min(c, it->second);
    }
    if (common == 0) return 0.0;
    const double p = double(common) / double(pred_total);
    const double r = double(common) / double(gold_total);
    return 2.0 * p * r / (p + r);
}

// 1 iff some gold trigger's normalized tokens appear consecutively in the
// leftmost predicted answer.
inline int hit_at_1(const std::vector<std::string>& pred_answers,
                    const std::vector<std::string>& gold_triggers) {
    if (pred_answers.empty()) return 0;
    const std::vector<std::string> left = metric_tokens(pred_answers.front());
    if (left.empty()) return 0;
    for (const auto& trigger : gold_triggers) {
        const std::vector<std::string> want = metric_tokens(trigger);
        if (want.empty() || want.size() > left.size()) continue;
        for (size_t start = 0; start + want.size() <= left.size(); ++start) {
            if (std::equal(want.begin(), want.end(), left.begin() + start)) return 1;
        }
    }
    return 0;
}

// 1 iff any predicted answer equals any gold answer after normalization.
inline int exact_match(const std::vector<std::string>& pred_answers,
                       const std::vector<std::string>& gold_answers) {
    for (const auto& p : pred_answers) {
        const std::string np = normalize_answer(p);
        if (np.empty()) continue;
        for (const auto& g : gold_answers)
            if (np == normalize_answer(g)) return 1;
    }
    return 0;
}

struct Prediction {
    std::string id;
    std::vector<std::string> answers;
    std::optional<RelationType> predicted_type;
};

struct QuestionScore {
    std::string id;
    RelationType type = RelationType::causal;
    double f1t = 0.0;
    int hit1 = 0;
    int em = 0;
};

struct MetricsAggregate {
    double f1t = 0.0, hit1 = 0.0, em = 0.0;
    int count = 0;
};

struct MetricsReport {
    std::vector<QuestionScore> per_question;
    MetricsAggregate overall;
    std::array<MetricsAggregate, kNumRelationTypes> per_type{};
    std::optional<double> type_accuracy;

    nlohmann::json to_json() const {
        auto agg = [](const MetricsAggregate& a) {
            return nlohmann::json{{"f1t", a.f1t}, {"hit1", a.hit1}, {"em", a.em},
                                  {"count", a.count}};
        };
        nlohmann::json per_type_json = nlohmann::json::object();
        for (int t = 0; t < kNumRelationTypes; ++t)
            per_type_json[kRelationNames[t]] = agg(per_type[t]);
        nlohmann::json questions = nlohmann::json::array();
        for (const auto& q : per_question)
            questions.push_back({{"id", q.id},
                                 {"type", relation_name(q.type)},
                                 {"f1t", q.f1t},
                                 {"hit1", q.hit1},
                                 {"em", q.em}});
        nlohmann::json out = {{"overall", agg(overall)},
                              {"per_type", per_type_json},
                              {"per_question", questions}};
        if (type_accuracy) out["type_accuracy"] = *type_accuracy;
        return out;
    }
};

// Scores one prediction record per instance and aggregates macro means
// overall and per relation type.
inline MetricsReport build_report(const std::vector<Prediction>& predictions,
                                  const std::vector<QAInstance>& dataset) {
    std::unordered_map<std::string, const QAInstance*> by_id;
    for (const auto& inst : dataset) by_id[inst.id] = &inst;
    MetricsReport report;
    std::array<double, kNumRelationTypes> f1_sum{}, hit_sum{}, em_sum{};
    std::array<int, kNumRelationTypes> counts{};
    int type_correct = 0, type_total = 0;
    for (const auto& pred : predictions) {
        auto it = by_id.find(pred.id);
        if (it == by_id.end())
            throw DataError("build_report: prediction id '" + pred.id +
                            "' not present in the dataset");
        const QAInstance& inst = *it->second;
        std::vector<std::string> gold_answers;
        for (const auto& a : inst.answers) gold_answers.push_back(a.text);
        std::vector<std::string> gold_triggers;
        for (const auto& s : inst.answer_events) gold_triggers.push_back(s.text);

        QuestionScore score;
        score.id = pred.id;
        score.type = inst.type;
        score.f1t = f1_token(pred.answers, gold_answers);
        score.hit1 = hit_at_1(pred.answers, gold_triggers);
        score.em = exact_match(pred.answers, gold_answers);
        report.per_question.push_back(score);

        const int t = int(inst.type);
        f1_sum[t] += score.f1t;
        hit_sum[t] += score.hit1;
        em_sum[t] += score.em;
        counts[t] += 1;
        if (pred.predicted_type) {
            ++type_total;
            if (*pred.predicted_type == inst.type) ++type_correct;
        }
    }
    double f1_all = 0, hit_all = 0, em_all = 0;
    int n_all = 0;
    for (int t = 0; t < kNumRelationTypes; ++t) {
        report.per_type[t].count = counts[t];
        if (counts[t] > 0) {
            report.per_type[t].f1t = f1_sum[t] / counts[t];
            report.per_type[t].hit1 = hit_sum[t] / counts[t];
            report.per_type[t].em = em_sum[t] / counts[t];
        }
        f1_all += f1_sum[t];
        hit_all += hit_sum[t];
        em_all += em_sum[t];
        n_all += counts[t];
    }
    report.overall.count = n_all;
    if (n_all > 0) {
        report.overall.f1t = f1_all / n_all;
        report.overall.hit1 = hit_all / n_all;
        report.overall.em = em_all / n_all;
    }
    if (type_total > 0) report.type_accuracy = double(type_correct) / type_total;
    return report;
}

}  // namespace evqa
