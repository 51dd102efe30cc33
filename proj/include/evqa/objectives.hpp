#pragma once

// The four training losses and the event-pair machinery feeding them.
//
// Contrastive loss over transformed event vectors: positives pair every
// question-event token with every answer-event token in both directions; for
// each anchor, negatives are sampled from the other-event vectors. Each pair
// contributes -log(exp(cos(h_i,h_j)/tau) / s_i) with s_i summing the
// exponentiated scaled cosines of the positive and the anchor's negatives
// (evaluated in the rearranged log1p-style form, which is exact at zero
// negatives); the total is divided by Z = 2 (C_q + C_a).

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "evqa/errors.hpp"
#include "evqa/event_transform.hpp"
#include "evqa/modes.hpp"
#include "evqa/optimizer.hpp"
#include "evqa/relation.hpp"
#include "evqa/tensor.hpp"
#include "evqa/text.hpp"

namespace evqa {

template <class T>
struct EventVectorSets {
    Tensor<T> question;  // C_q x d
    Tensor<T> answer;    // C_a x d
    Tensor<T> other;     // C_o x d
    int cq = 0, ca = 0, co = 0;
};

// Selects trigger-token rows of H, applies the event transform, and
// partitions them into question/answer/other sets. Question and answer index
// sets must be disjoint.
template <class T>
EventVectorSets<T> collect_event_vectors(const Tensor<T>& h,
                                         const std::vector<int>& question_idx,
                                         const std::vector<int>& answer_idx,
                                         const std::vector<int>& other_idx,
                                         const TransformLayer<T>& transform) {
    for (int qi : question_idx)
        for (int ai : answer_idx)
            if (qi == ai)
                throw ContractError("collect_event_vectors: token " + std::to_string(qi) +
                                    " appears in both question and answer partitions");
    EventVectorSets<T> sets;
    sets.cq = int(question_idx.size());
    sets.ca = int(answer_idx.size());
    sets.co = int(other_idx.size());
    sets.question = transform.apply(select_rows(h, question_idx));
    sets.answer = transform.apply(select_rows(h, answer_idx));
    sets.other = transform.apply(select_rows(h, other_idx));
    return sets;
}

// min(k, pool) distinct indices, uniform without replacement.
inline std::vector<int> sample_negative_indices(int pool, int k, std::mt19937_64& rng) {
    if (k < 0) throw ConfigError("sample_negatives: k must be non-negative");
    const int take = std::min(k, pool);
    std::vector<int> idx(pool);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < take; ++i) {
        std::uniform_int_distribution<int> pick(i, pool - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(take);
    return idx;
}

template <class T>
Tensor<T> sample_negatives(const Tensor<T>& other, int k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return select_rows(other, sample_negative_indices(other.rows(), k, rng));
}

template <class T>
struct ContrastiveResult {
    Tensor<T> loss;
    bool skipped = false;  // no positive pair was available
    int pair_terms = 0;    // ordered pair terms summed
};

template <class T>
ContrastiveResult<T> contrastive_loss(const EventVectorSets<T>& sets, double tau, int k_neg,
                                      std::uint64_t seed) {
    if (!(tau > 0.0)) throw ConfigError("contrastive_loss: temperature must be positive");
    ContrastiveResult<T> result;
    if (sets.cq < 1 || sets.ca < 1 || sets.cq + sets.ca < 2) {
        result.loss = Tensor<T>::scalar(T(0));
        result.skipped = true;
        return result;
    }
    std::mt19937_64 rng(seed);
    const T inv_tau = T(1.0 / tau);

    // Anchor rows and their negative samples; anchors 0..cq-1 are question
    // events, the rest answer events.
    const int anchors = sets.cq + sets.ca;
    std::vector<Tensor<T>> anchor_rows(anchors);
    std::vector<std::vector<Tensor<T>>> anchor_negs(anchors);
    for (int a = 0; a < anchors; ++a) {
        anchor_rows[a] = a < sets.cq ? select_rows(sets.question, {a})
                                     : select_rows(sets.answer, {a - sets.cq});
        for (int n : sample_negative_indices(sets.co, k_neg, rng))
            anchor_negs[a].push_back(select_rows(sets.other, {n}));
    }

    std::vector<Tensor<T>> terms;
    auto pair_term = [&](int anchor, const Tensor<T>& partner_row) {
        const Tensor<T> pos = scale(cosine(anchor_rows[anchor], partner_row), inv_tau);
        if (anchor_negs[anchor].empty()) return;  // s_i reduces to the positive: exact zero
        std::vector<Tensor<T>> expterms;
        for (const auto& neg : anchor_negs[anchor]) {
            const Tensor<T> cn = scale(cosine(anchor_rows[anchor], neg), inv_tau);
            expterms.push_back(vexp(sub(cn, pos)));
        }
        Tensor<T> s = Tensor<T>::scalar(T(1));
        for (const auto& e : expterms) s = add(s, e);
        terms.push_back(vlog(s));
    };
    for (int qi = 0; qi < sets.cq; ++qi)
        for (int aj = 0; aj < sets.ca; ++aj) {
            pair_term(qi, anchor_rows[sets.cq + aj]);
            pair_term(sets.cq + aj, anchor_rows[qi]);
            result.pair_terms += 2;
        }
    if (terms.empty()) {
        result.loss = Tensor<T>::scalar(T(0));
        return result;
    }
    Tensor<T> total = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
    const T z = T(2 * (sets.cq + sets.ca));
    result.loss = scale(total, T(1) / z);
    return result;
}

// ---------------------------------------------------------------------------
// Event relation type classification
// ---------------------------------------------------------------------------

template <class T>
struct TypeClassifier {
    Tensor<T> w;  // d x 5
    Tensor<T> b;  // 1 x 5

    static TypeClassifier init(int d, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        TypeClassifier c;
        c.w = Tensor<T>::randn(d, kNumRelationTypes, rng, T(std::sqrt(2.0 / (d + 5))), true);
        c.b = Tensor<T>::zeros(1, kNumRelationTypes, true);
        return c;
    }

    void register_params(ParamSet<T>& ps) const {
        ps.add("type_head.w", w, true);
        ps.add("type_head.b", b, false);
    }
};

template <class T>
struct TypeResult {
    RelationType predicted = RelationType::causal;
    std::array<double, kNumRelationTypes> probs{};
    Tensor<T> loss;      // defined only when gold was provided
    bool has_loss = false;
};

// Mean-pools the transformed question-token vectors, applies the
// feed-forward head, and softmaxes over the five types. With a gold label the
// cross-entropy loss is attached.
template <class T>
TypeResult<T> type_classify(const Tensor<T>& h, const std::vector<int>& question_token_idx,
                            const TransformLayer<T>& transform, const TypeClassifier<T>& head,
                            std::optional<RelationType> gold) {
    if (question_token_idx.empty())
        throw ContractError("type_classify: question token indices must be non-empty");
    const Tensor<T> pooled = mean_rows(transform.apply(select_rows(h, question_token_idx)));
    const Tensor<T> logits = add_rowvec(matmul(pooled, head.w), head.b);

    TypeResult<T> result;
    const auto& lv = logits.values();
    double mx = lv[0];
    int best = 0;
    for (int j = 1; j < kNumRelationTypes; ++j)
        if (double(lv[j]) > mx) {
            mx = double(lv[j]);
            best = j;
        }
    double denom = 0.0;
    for (int j = 0; j < kNumRelationTypes; ++j) denom += std::exp(double(lv[j]) - mx);
    for (int j = 0; j < kNumRelationTypes; ++j)
        result.probs[j] = std::exp(double(lv[j]) - mx) / denom;
    result.predicted = static_cast<RelationType>(best);
    if (gold) {
        result.loss = weighted_cross_entropy(logits, {int(*gold)}, std::vector<T>{T(1)});
        result.has_loss = true;
    }
    return result;
}

// ---------------------------------------------------------------------------
// QA losses
// ---------------------------------------------------------------------------

// Target token ids: answers joined by the ";" separator, then "</s>". The
// content length T = N_a + A - 1 excludes the end token; the end token is
// still trained, so the mean runs over T + 1 positions.
inline std::vector<int> generative_target_ids(const std::vector<std::string>& answers,
                                              const Vocab& vocab) {
    if (answers.empty())
        throw DataError("generative target: answer list must be non-empty");
    std::vector<int> ids;
    for (size_t a = 0; a < answers.size(); ++a) {
        if (a) ids.push_back(Vocab::kAnswerSep);
        for (const auto& tok : tokenize(answers[a])) ids.push_back(vocab.id(tok.text));
    }
    ids.push_back(Vocab::kEos);
    return ids;
}

inline int target_content_length(const std::vector<int>& target_ids) {
    return int(target_ids.size()) - 1;
}

template <class T>
Tensor<T> generative_qa_loss(const Tensor<T>& decoder_logits, const std::vector<int>& target_ids) {
    if (target_ids.empty()) throw DataError("generative_qa_loss: empty target");
    if (decoder_logits.rows() != int(target_ids.size()))
        throw ShapeError("generative_qa_loss: " + std::to_string(decoder_logits.rows()) +
                         " logit rows for " + std::to_string(target_ids.size()) + " targets");
    return weighted_cross_entropy(decoder_logits, target_ids,
                                  std::vector<T>(target_ids.size(), T(1)));
}

// Gold IO/BIO labels over paragraph token positions from answer-aligned token
// index sets (indices into the formatted sequence).
inline std::vector<int> gold_tags(const AlignedSequence& seq,
                                  const std::vector<std::vector<int>>& answer_token_sets,
                                  Tagging scheme) {
    const std::vector<int> pidx = seq.segment_indices(Segment::paragraph);
    std::vector<int> pos_of(seq.length(), -1);
    for (int i = 0; i < int(pidx.size()); ++i) pos_of[pidx[i]] = i;
    std::vector<int> labels(pidx.size(), kTagO);
    for (const auto& set : answer_token_sets) {
        for (int tok : set) {
            if (tok < 0 || tok >= seq.length() || pos_of[tok] < 0)
                throw ContractError("gold_tags: answer token outside the paragraph segment");
            labels[pos_of[tok]] = kTagI;
        }
    }
    if (scheme == Tagging::bio) {
        for (int i = 0; i < int(labels.size()); ++i)
            if (labels[i] == kTagI && (i == 0 || labels[i - 1] == kTagO)) labels[i] = kTagB;
    }
    return labels;
}

// Weighted mean token cross entropy over paragraph tokens; non-O labels get
// `label_weight` (4 per the training recipe) and the normalizer is the weight
// sum.
template <class T>
Tensor<T> extractive_qa_loss(const Tensor<T>& tag_logits, const std::vector<int>& labels,
                             T label_weight = T(4)) {
    if (tag_logits.rows() != int(labels.size()))
        throw ShapeError("extractive_qa_loss: " + std::to_string(tag_logits.rows()) +
                         " logit rows for " + std::to_string(labels.size()) + " labels");
    std::vector<T> weights(labels.size());
    for (size_t i = 0; i < labels.size(); ++i)
        weights[i] = labels[i] == kTagO ? T(1) : label_weight;
    return weighted_cross_entropy(tag_logits, labels, weights);
}

// Contiguous tagged runs -> [first, last] paragraph-local position pairs.
// A "B" opens a span; "I" continues one (or opens, when following "O").
inline std::vector<std::pair<int, int>> spans_from_tags(const std::vector<int>& tags) {
    std::vector<std::pair<int, int>> out;
    int start = -1;
    for (int i = 0; i < int(tags.size()); ++i) {
        const bool inside = tags[i] != kTagO;
        const bool opens = tags[i] == kTagB;
        if (inside && (start < 0 || opens)) {
            if (start >= 0 && opens) out.emplace_back(start, i - 1);
            start = i;
        } else if (!inside && start >= 0) {
            out.emplace_back(start, i - 1);
            start = -1;
        }
    }
    if (start >= 0) out.emplace_back(start, int(tags.size()) - 1);
    return out;
}

// ---------------------------------------------------------------------------
// Combined objective
// ---------------------------------------------------------------------------

struct AblationFlags {
    bool no_prefix = false;
    bool no_tc = false;
    bool no_cl = false;
    bool no_transm = false;
};

template <class T>
struct LossBundle {
    Tensor<T> total;
    T qa = 0, tc = 0, cl = 0, combined = 0;
    T lambda_tc = 0, lambda_cl = 0;
    bool cl_skipped = false;
};

// L = L_qa + lambda_tc * L_tc + lambda_cl * L_cl. Disabled components enter
// as exact-zero constants so the additive identity holds bitwise for every
// flag combination.
template <class T>
LossBundle<T> total_loss(const Tensor<T>& qa, std::optional<Tensor<T>> tc,
                         std::optional<Tensor<T>> cl, T lambda_tc, T lambda_cl,
                         bool cl_skipped = false) {
    if (lambda_tc < T(0) || lambda_cl < T(0))
        throw ConfigError("total_loss: loss weights must be non-negative");
    LossBundle<T> bundle;
    bundle.lambda_tc = lambda_tc;
    bundle.lambda_cl = lambda_cl;
    bundle.cl_skipped = cl_skipped;
    const Tensor<T> tc_t = tc ? *tc : Tensor<T>::scalar(T(0));
    const Tensor<T> cl_t = cl ? *cl : Tensor<T>::scalar(T(0));
    bundle.total = add(add(qa, scale(tc_t, lambda_tc)), scale(cl_t, lambda_cl));
    bundle.qa = qa.item();
    bundle.tc = tc_t.item();
    bundle.cl = cl_t.item();
    bundle.combined = bundle.total.item();
    return bundle;
}

}  // namespace evqa
