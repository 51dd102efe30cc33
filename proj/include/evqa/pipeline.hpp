#pragma once

// Run configuration and the assembled training pipeline: model, event
// transform, type classifier, vocabulary, and the per-instance encoding and
// loss computation shared by training, evaluation and the checkpoint format.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evqa/dataset.hpp"
#include "evqa/errors.hpp"
#include "evqa/event_transform.hpp"
#include "evqa/metrics.hpp"
#include "evqa/model.hpp"
#include "evqa/objectives.hpp"
#include "evqa/optimizer.hpp"
#include "evqa/text.hpp"

namespace evqa {

struct RunConfig {
    ModelConfig model;

    double tau = 1.0;
    double lambda_tc = 0.1;
    double lambda_cl = 0.1;
    int k_neg = 2;
    double label_weight = 4.0;  // non-O tag weight, extractive setting

    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-6;
    double weight_decay = 0.95;
    double warmup_fraction = 0.1;

    int batch_size = 2;
    int accum_steps = 3;
    int epochs = 10;
    std::uint64_t seed = 5;
    int max_answer_len = 48;
    int vocab_min_count = 1;

    AblationFlags flags;

    std::string train_path, eval_path, out_dir = ".";

    void validate() const {
        if (tau <= 0) throw ConfigError("config: tau must be positive");
        if (lambda_tc < 0 || lambda_cl < 0) throw ConfigError("config: lambdas must be >= 0");
        if (k_neg < 0) throw ConfigError("config: k_neg must be >= 0");
        if (batch_size < 1 || accum_steps < 1) throw ConfigError("config: bad batch shape");
        if (epochs < 0) throw ConfigError("config: epochs must be >= 0");
        if (lr <= 0) throw ConfigError("config: lr must be positive");
        if (max_answer_len < 1) throw ConfigError("config: max_answer_len must be >= 1");
    }

    nlohmann::json to_json() const {
        return {{"model",
                 {{"layers", model.layers},
                  {"heads", model.heads},
                  {"d", model.d},
                  {"ffn", model.ffn},
                  {"max_len", model.max_len},
                  {"dropout", model.dropout},
                  {"setting", setting_name(model.setting)},
                  {"tagging", tagging_name(model.tagging)}}},
                {"tau", tau},
                {"lambda_tc", lambda_tc},
                {"lambda_cl", lambda_cl},
                {"k_neg", k_neg},
                {"label_weight", label_weight},
                {"optim",
                 {{"lr", lr},
                  {"beta1", beta1},
                  {"beta2", beta2},
                  {"eps", eps},
                  {"weight_decay", weight_decay},
                  {"warmup_fraction", warmup_fraction}}},
                {"batch_size", batch_size},
                {"accum_steps", accum_steps},
                {"epochs", epochs},
                {"seed", seed},
                {"max_answer_len", max_answer_len},
                {"vocab_min_count", vocab_min_count},
                {"flags",
                 {{"no_prefix", flags.no_prefix},
                  {"no_tc", flags.no_tc},
                  {"no_cl", flags.no_cl},
                  {"no_transm", flags.no_transm}}},
                {"train_path", train_path},
                {"eval_path", eval_path},
                {"out_dir", out_dir}};
    }

    static RunConfig from_json(const nlohmann::json& j) {
        RunConfig cfg;
        if (j.contains("model")) {
            const auto& m = j.at("model");
            cfg.model.layers = m.value("layers", cfg.model.layers);
            cfg.model.heads = m.value("heads", cfg.model.heads);
            cfg.model.d = m.value("d", cfg.model.d);
            cfg.model.ffn = m.value("ffn", cfg.model.ffn);
            cfg.model.max_len = m.value("max_len", cfg.model.max_len);
            cfg.model.dropout = m.value("dropout", cfg.model.dropout);
            if (m.contains("setting")) {
                auto s = parse_setting(m.at("setting").get<std::string>());
                if (!s) throw ConfigError("config: unknown setting");
                cfg.model.setting = *s;
            }
            if (m.contains("tagging")) {
                auto t = parse_tagging(m.at("tagging").get<std::string>());
                if (!t) throw ConfigError("config: unknown tagging scheme");
                cfg.model.tagging = *t;
            }
        }
        cfg.tau = j.value("tau", cfg.tau);
        cfg.lambda_tc = j.value("lambda_tc", cfg.lambda_tc);
        cfg.lambda_cl = j.value("lambda_cl", cfg.lambda_cl);
        cfg.k_neg = j.value("k_neg", cfg.k_neg);
        cfg.label_weight = j.value("label_weight", cfg.label_weight);
        if (j.contains("optim")) {
            const auto& o = j.at("optim");
            cfg.lr = o.value("lr", cfg.lr);
            cfg.beta1 = o.value("beta1", cfg.beta1);
            cfg.beta2 = o.value("beta2", cfg.beta2);
            cfg.eps = o.value("eps", cfg.eps);
            cfg.weight_decay = o.value("weight_decay", cfg.weight_decay);
            cfg.warmup_fraction = o.value("warmup_fraction", cfg.warmup_fraction);
        }
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.accum_steps = j.value("accum_steps", cfg.accum_steps);
        cfg.epochs = j.value("epochs", cfg.epochs);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.max_answer_len = j.value("max_answer_len", cfg.max_answer_len);
        cfg.vocab_min_count = j.value("vocab_min_count", cfg.vocab_min_count);
        if (j.contains("flags")) {
            const auto& f = j.at("flags");
            cfg.flags.no_prefix = f.value("no_prefix", false);
            cfg.flags.no_tc = f.value("no_tc", false);
            cfg.flags.no_cl = f.value("no_cl", false);
            cfg.flags.no_transm = f.value("no_transm", false);
        }
        cfg.train_path = j.value("train_path", cfg.train_path);
        cfg.eval_path = j.value("eval_path", cfg.eval_path);
        cfg.out_dir = j.value("out_dir", cfg.out_dir);
        cfg.validate();
        return cfg;
    }
};

// Builds the vocabulary a run trains with: corpus text plus the five
// relation prefix words, which belong to the input template rather than to
// any paragraph.
inline Vocab build_run_vocab(const std::vector<QAInstance>& train, int min_count) {
    std::vector<std::string> corpus;
    corpus.reserve(train.size() * 2);
    for (const auto& inst : train) {
        corpus.push_back(inst.question);
        corpus.push_back(inst.paragraph);
    }
    Vocab vocab = Vocab::build(corpus, min_count);
    for (int t = 0; t < kNumRelationTypes; ++t)
        vocab.add_token(relation_prefix(static_cast<RelationType>(t)));
    return vocab;
}

template <class T>
struct Pipeline {
    RunConfig cfg;
    Vocab vocab;
    Model<T> model;
    TransformLayer<T> transform;
    TypeClassifier<T> type_head;  // meaningful only when !cfg.flags.no_tc
    ParamSet<T> params;

    static Pipeline build(RunConfig cfg, Vocab vocab) {
        cfg.validate();
        cfg.model.vocab = vocab.size();
        cfg.model.seed = cfg.seed;
        Model<T> model(cfg.model);
        TransformLayer<T> transform =
            cfg.flags.no_transm ? TransformLayer<T>::identity(cfg.model.d)
                                : TransformLayer<T>::near_identity(cfg.model.d, cfg.seed + 101);
        TypeClassifier<T> head;
        if (!cfg.flags.no_tc) head = TypeClassifier<T>::init(cfg.model.d, cfg.seed + 202);
        Pipeline p{std::move(cfg), std::move(vocab), std::move(model), std::move(transform),
                   std::move(head), ParamSet<T>()};
        p.register_all();
        return p;
    }

    void register_all() {
        params = ParamSet<T>();
        model.register_params(params);
        transform.register_params(params);
        if (!cfg.flags.no_tc) type_head.register_params(params);
    }
};

// Token-level view of one instance after formatting and span alignment.
struct InstanceEncoding {
    AlignedSequence seq;
    std::vector<int> question_event_tokens;
    std::vector<int> answer_event_tokens;
    std::vector<int> other_event_tokens;
    std::vector<std::vector<int>> answer_token_sets;  // per answer span
    std::vector<int> question_tokens;                 // every question-segment token
    std::vector<int> target_ids;                      // generative target (content + "</s>")
    bool usable = true;
    std::string skip_reason;
};

namespace detail {

inline std::vector<int> flatten_sorted_unique(const std::vector<std::vector<int>>& sets) {
    std::vector<int> out;
    for (const auto& s : sets) out.insert(out.end(), s.begin(), s.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline std::vector<CharSpan> event_char_spans(const std::vector<EventSpan>& spans) {
    std::vector<CharSpan> out;
    out.reserve(spans.size());
    for (const auto& s : spans) out.push_back({s.begin, s.end});
    return out;
}

}  // namespace detail

// Formats one instance for training (gold prefix unless ablated) and aligns
// every annotated span. Instances whose answers do not survive paragraph
// truncation come back with usable = false.
template <class T>
InstanceEncoding prepare_instance(const Pipeline<T>& p, const QAInstance& inst,
                                  bool with_prefix_type) {
    InstanceEncoding enc;
    const std::optional<RelationType> prefix =
        with_prefix_type && !p.cfg.flags.no_prefix ? std::optional<RelationType>(inst.type)
                                                   : std::nullopt;
    const int max_len = p.cfg.model.max_len;
    enc.seq = p.cfg.model.setting == Setting::generative
                  ? format_generative(prefix, inst.question, inst.paragraph, p.vocab, max_len)
                  : format_extractive(prefix, inst.question, inst.paragraph, p.vocab, max_len);
    enc.question_tokens = enc.seq.segment_indices(Segment::question);
    try {
        const auto q_sets = align_event_spans(
            enc.seq, detail::event_char_spans(inst.question_events), Segment::question);
        const auto a_sets = align_event_spans(
            enc.seq, detail::event_char_spans(inst.answer_events), Segment::paragraph);
        const auto o_sets = align_event_spans(
            enc.seq, detail::event_char_spans(inst.other_events), Segment::paragraph);
        std::vector<CharSpan> answer_spans;
        for (const auto& a : inst.answers) answer_spans.push_back({a.begin, a.end});
        enc.answer_token_sets = align_event_spans(enc.seq, answer_spans, Segment::paragraph);

        enc.question_event_tokens = detail::flatten_sorted_unique(q_sets);
        enc.answer_event_tokens = detail::flatten_sorted_unique(a_sets);
        // Paragraph events include answer events; keep "other" disjoint.
        for (int tok : detail::flatten_sorted_unique(o_sets))
            if (!std::binary_search(enc.answer_event_tokens.begin(),
                                    enc.answer_event_tokens.end(), tok))
                enc.other_event_tokens.push_back(tok);
    } catch (const DataError& e) {
        enc.usable = false;
        enc.skip_reason = enc.seq.truncated
                              ? std::string("span lost to truncation: ") + e.what()
                              : std::string(e.what());
        return enc;
    }
    if (p.cfg.model.setting == Setting::generative) {
        std::vector<std::string> answers;
        for (const auto& a : inst.answers) answers.push_back(a.text);
        enc.target_ids = generative_target_ids(answers, p.vocab);
    }
    return enc;
}

template <class T>
struct InstanceLosses {
    LossBundle<T> bundle;
    std::optional<RelationType> type_prediction;
};

// Forward pass and Eq.-style combined objective for one training instance.
// `negative_seed` pins the contrastive negative sample; dropout_rng may be
// null when the model runs without dropout.
template <class T>
InstanceLosses<T> compute_losses(const Pipeline<T>& p, const InstanceEncoding& enc,
                                 const QAInstance& inst, bool training,
                                 std::uint64_t negative_seed,
                                 std::mt19937_64* dropout_rng = nullptr) {
    InstanceLosses<T> out;
    const Tensor<T> h = p.model.encode(enc.seq, training, dropout_rng);

    Tensor<T> qa;
    if (p.cfg.model.setting == Setting::generative) {
        std::vector<int> dec_inputs;
        dec_inputs.reserve(enc.target_ids.size());
        dec_inputs.push_back(Vocab::kBos);
        dec_inputs.insert(dec_inputs.end(), enc.target_ids.begin(), enc.target_ids.end() - 1);
        const Tensor<T> logits = p.model.decode_logits(h, dec_inputs, training, dropout_rng);
        qa = generative_qa_loss(logits, enc.target_ids);
    } else {
        const std::vector<int> labels =
            gold_tags(enc.seq, enc.answer_token_sets, p.cfg.model.tagging);
        qa = extractive_qa_loss(p.model.tag_logits(h, enc.seq), labels, T(p.cfg.label_weight));
    }

    std::optional<Tensor<T>> tc;
    if (!p.cfg.flags.no_tc) {
        auto tr = type_classify(h, enc.question_tokens, p.transform, p.type_head,
                                std::optional<RelationType>(inst.type));
        out.type_prediction = tr.predicted;
        tc = tr.loss;
    }

    std::optional<Tensor<T>> cl;
    bool cl_skipped = false;
    if (!p.cfg.flags.no_cl) {
        const auto sets =
            collect_event_vectors(h, enc.question_event_tokens, enc.answer_event_tokens,
                                  enc.other_event_tokens, p.transform);
        auto cr = contrastive_loss(sets, p.cfg.tau, p.cfg.k_neg, negative_seed);
        cl = cr.loss;
        cl_skipped = cr.skipped;
    }

    out.bundle = total_loss(qa, tc, cl, T(p.cfg.lambda_tc), T(p.cfg.lambda_cl), cl_skipped);
    return out;
}

// ---------------------------------------------------------------------------
// Prediction (no gold annotations enter here)
// ---------------------------------------------------------------------------

// The only instance fields prediction may read.
struct PredictionView {
    std::string id;
    std::string question;
    std::string paragraph;
};

template <class T>
std::optional<RelationType> predict_type(const Pipeline<T>& p, const PredictionView& view) {
    if (p.cfg.flags.no_tc) return std::nullopt;
    const AlignedSequence seq =
        p.cfg.model.setting == Setting::generative
            ? format_generative(std::nullopt, view.question, view.paragraph, p.vocab,
                                p.cfg.model.max_len)
            : format_extractive(std::nullopt, view.question, view.paragraph, p.vocab,
                                p.cfg.model.max_len);
    const Tensor<T> h = p.model.encode(seq);
    const auto result = type_classify(h, seq.segment_indices(Segment::question), p.transform,
                                      p.type_head, std::nullopt);
    return result.predicted;
}

// Predicts the answers for one instance. `fallback_prefix` supplies the
// prefix when the classifier was ablated away (-TC); prediction itself never
// touches gold spans or labels.
template <class T>
Prediction predict_one(const Pipeline<T>& p, const PredictionView& view,
                       std::optional<RelationType> fallback_prefix = std::nullopt) {
    Prediction pred;
    pred.id = view.id;
    std::optional<RelationType> prefix;
    if (!p.cfg.flags.no_prefix) {
        pred.predicted_type = predict_type(p, view);
        prefix = pred.predicted_type ? pred.predicted_type : fallback_prefix;
    }
    if (p.cfg.model.setting == Setting::generative) {
        const AlignedSequence seq = format_generative(prefix, view.question, view.paragraph,
                                                      p.vocab, p.cfg.model.max_len);
        const std::vector<int> ids = p.model.generate(seq, p.cfg.max_answer_len);
        std::vector<std::string> current;
        auto flush = [&] {
            if (!current.empty()) {
                pred.answers.push_back(detokenize(current));
                current.clear();
            }
        };
        for (int id : ids) {
            if (id == Vocab::kAnswerSep) {
                flush();
            } else {
                current.push_back(p.vocab.token(id));
            }
        }
        flush();
    } else {
        const AlignedSequence seq = format_extractive(prefix, view.question, view.paragraph,
                                                      p.vocab, p.cfg.model.max_len);
        const Tensor<T> logits = p.model.tag_tokens(seq);
        const int labels = p.cfg.model.tag_labels();
        std::vector<int> tags(logits.rows());
        for (int i = 0; i < logits.rows(); ++i) {
            const T* row = logits.values().data() + size_t(i) * labels;
            int best = 0;
            for (int j = 1; j < labels; ++j)
                if (row[j] > row[best]) best = j;
            tags[i] = best;
        }
        const std::vector<int> pidx = seq.segment_indices(Segment::paragraph);
        for (const auto& [first, last] : spans_from_tags(tags)) {
            const auto& t0 = seq.tokens[pidx[first]];
            const auto& t1 = seq.tokens[pidx[last]];
            pred.answers.push_back(
                view.paragraph.substr(t0.src_begin, t1.src_end - t0.src_begin));
        }
    }
    return pred;
}

}  // namespace evqa
