#pragma once

// Orchestration: the training loop with gradient accumulation and loss
// logging, evaluation with automatic type prefixes, the embedding projection
// dump, the few-shot sweep, and the property-check suite behind `check`.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evqa/checkpoint.hpp"
#include "evqa/dataset.hpp"
#include "evqa/gradcheck.hpp"
#include "evqa/linalg.hpp"
#include "evqa/metrics.hpp"
#include "evqa/pipeline.hpp"

namespace evqa {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

struct TrainSummary {
    long steps = 0;
    int epochs = 0;
    int trained_instances = 0;
    int skipped_instances = 0;
    double final_loss = 0, final_qa = 0, final_tc = 0, final_cl = 0;
    double det_m = 1.0;
    double cond_m = 1.0;
    bool transform_identity = false;
    std::string checkpoint_path, loss_log_path, summary_path;
};

template <class T>
struct TrainResult {
    Pipeline<T> pipeline;
    TrainSummary summary;
};

// Trains a fresh pipeline on `train_set` per the config, writing the
// checkpoint, a JSON-lines loss curve and a summary (with the post-training
// det(M) report) into cfg.out_dir.
template <class T>
TrainResult<T> train(const RunConfig& cfg, const std::vector<QAInstance>& train_set,
                     std::ostream* info = nullptr, const Vocab* preset_vocab = nullptr) {
    cfg.validate();
    if (train_set.empty() && cfg.epochs > 0)
        throw ConfigError("train: empty training set with epochs > 0");
    std::filesystem::create_directories(cfg.out_dir);

    Vocab vocab = preset_vocab ? *preset_vocab
                               : build_run_vocab(train_set, cfg.vocab_min_count);
    Pipeline<T> p = Pipeline<T>::build(cfg, std::move(vocab));

    std::vector<InstanceEncoding> encodings;
    std::vector<int> usable;
    TrainSummary summary;
    for (int i = 0; i < int(train_set.size()); ++i) {
        encodings.push_back(prepare_instance(p, train_set[i], true));
        if (encodings.back().usable) {
            usable.push_back(i);
        } else {
            ++summary.skipped_instances;
            if (info)
                *info << "warning: skipping instance " << train_set[i].id << " ("
                      << encodings.back().skip_reason << ")\n";
        }
    }
    summary.trained_instances = int(usable.size());
    summary.epochs = cfg.epochs;

    const int per_step = cfg.batch_size * cfg.accum_steps;
    const long steps_per_epoch = usable.empty() ? 0 : (long(usable.size()) + per_step - 1) / per_step;
    AdamConfig<T> adam_cfg;
    adam_cfg.lr = T(cfg.lr);
    adam_cfg.beta1 = T(cfg.beta1);
    adam_cfg.beta2 = T(cfg.beta2);
    adam_cfg.eps = T(cfg.eps);
    adam_cfg.weight_decay = T(cfg.weight_decay);
    adam_cfg.warmup_fraction = cfg.warmup_fraction;
    adam_cfg.total_steps = std::max<long>(1, steps_per_epoch * cfg.epochs);
    Adam<T> adam(adam_cfg, p.params);

    summary.loss_log_path = cfg.out_dir + "/loss_log.jsonl";
    std::ofstream loss_log(summary.loss_log_path);
    if (!loss_log) throw DataError("train: cannot write " + summary.loss_log_path);
    loss_log << std::setprecision(10);

    std::mt19937_64 dropout_rng(mix_seed(cfg.seed, 0xD0));
    std::uint64_t instance_counter = 0;
    for (int epoch = 0; epoch < cfg.epochs && !usable.empty(); ++epoch) {
        std::vector<int> order = usable;
        std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x5E + epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (size_t pos = 0; pos < order.size();) {
            const size_t group_end = std::min(order.size(), pos + size_t(per_step));
            const int group = int(group_end - pos);
            double sum_l = 0, sum_qa = 0, sum_tc = 0, sum_cl = 0;
            for (; pos < group_end; ++pos) {
                const int idx = order[pos];
                auto losses = compute_losses(p, encodings[idx], train_set[idx], true,
                                             mix_seed(cfg.seed, instance_counter++),
                                             &dropout_rng);
                scale(losses.bundle.total, T(1) / T(group)).backward();
                sum_l += double(losses.bundle.combined);
                sum_qa += double(losses.bundle.qa);
                sum_tc += double(losses.bundle.tc);
                sum_cl += double(losses.bundle.cl);
            }
            adam.step(p.params);
            p.params.zero_grad();
            ++summary.steps;
            summary.final_loss = sum_l / group;
            summary.final_qa = sum_qa / group;
            summary.final_tc = sum_tc / group;
            summary.final_cl = sum_cl / group;
            loss_log << "{\"step\":" << summary.steps << ",\"l_qa\":" << summary.final_qa
                     << ",\"l_tc\":" << summary.final_tc << ",\"l_cl\":" << summary.final_cl
                     << ",\"l\":" << summary.final_loss << "}\n";
        }
    }

    summary.transform_identity = p.transform.is_identity();
    summary.det_m = p.transform.is_identity() ? 1.0 : p.transform.determinant();
    summary.cond_m = p.transform.condition();

    summary.checkpoint_path = cfg.out_dir + "/checkpoint.bin";
    save_checkpoint(p, summary.checkpoint_path);
    summary.summary_path = cfg.out_dir + "/train_summary.json";
    {
        nlohmann::json js = {{"steps", summary.steps},
                             {"epochs", summary.epochs},
                             {"trained_instances", summary.trained_instances},
                             {"skipped_instances", summary.skipped_instances},
                             {"final_loss", summary.final_loss},
                             {"final_l_qa", summary.final_qa},
                             {"final_l_tc", summary.final_tc},
                             {"final_l_cl", summary.final_cl},
                             {"transform",
                              {{"identity", summary.transform_identity},
                               {"det", summary.det_m},
                               {"condition", summary.cond_m}}}};
        std::ofstream out(summary.summary_path);
        out << js.dump(1) << "\n";
    }
    if (info)
        *info << "trained " << summary.steps << " steps; final L = " << summary.final_loss
              << "; det(M) = " << summary.det_m << "\n";
    return {std::move(p), std::move(summary)};
}

struct EvalResult {
    MetricsReport report;
    int gold_prefix_fallbacks = 0;  // -TC ablation: prefix fell back to gold
};

// Scores every instance: the prefix comes from the model's own type
// classifier; with -TC it falls back to the gold type (loudly). Gold spans
// and labels are only consulted for scoring.
template <class T>
EvalResult evaluate(const Pipeline<T>& p, const std::vector<QAInstance>& instances,
                    std::ostream* info = nullptr) {
    EvalResult result;
    std::vector<Prediction> predictions;
    predictions.reserve(instances.size());
    const bool needs_fallback = !p.cfg.flags.no_prefix && p.cfg.flags.no_tc;
    if (needs_fallback && info)
        *info << "WARNING: type classifier ablated (-TC); evaluation uses the gold type "
                 "prefix\n";
    for (const auto& inst : instances) {
        const PredictionView view{inst.id, inst.question, inst.paragraph};
        std::optional<RelationType> fallback;
        if (needs_fallback) {
            fallback = inst.type;
            ++result.gold_prefix_fallbacks;
        }
        predictions.push_back(predict_one(p, view, fallback));
    }
    result.report = build_report(predictions, instances);
    return result;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct AlignmentGap {
    double mean_pos_cos = 0;  // question-event vs answer-event
    double mean_neg_cos = 0;  // question-event vs other-event
    double gap = 0;
    long pos_pairs = 0, neg_pairs = 0;
};

// Mean cosine between transformed question-event and answer-event vectors
// minus the same against other-event vectors, over gold spans; the scoring-
// side view of what contrastive training is supposed to achieve.
template <class T>
AlignmentGap alignment_gap(const Pipeline<T>& p, const std::vector<QAInstance>& instances) {
    AlignmentGap out;
    double pos_sum = 0, neg_sum = 0;
    for (const auto& inst : instances) {
        const InstanceEncoding enc = prepare_instance(p, inst, true);
        if (!enc.usable || enc.question_event_tokens.empty()) continue;
        const Tensor<T> h = p.model.encode(enc.seq);
        const auto sets = collect_event_vectors(h, enc.question_event_tokens,
                                                enc.answer_event_tokens,
                                                enc.other_event_tokens, p.transform);
        auto row = [](const Tensor<T>& m, int i) {
            return std::vector<double>(m.values().begin() + size_t(i) * m.cols(),
                                       m.values().begin() + size_t(i + 1) * m.cols());
        };
        auto cos_rows = [](const std::vector<double>& a, const std::vector<double>& b) {
            double dot = 0, na = 0, nb = 0;
            for (size_t i = 0; i < a.size(); ++i) {
                dot += a[i] * b[i];
                na += a[i] * a[i];
                nb += b[i] * b[i];
            }
            return dot / (std::sqrt(na) * std::sqrt(nb));
        };
        for (int qi = 0; qi < sets.cq; ++qi) {
            const auto q = row(sets.question, qi);
            for (int ai = 0; ai < sets.ca; ++ai) {
                pos_sum += cos_rows(q, row(sets.answer, ai));
                ++out.pos_pairs;
            }
            for (int oi = 0; oi < sets.co; ++oi) {
                neg_sum += cos_rows(q, row(sets.other, oi));
                ++out.neg_pairs;
            }
        }
    }
    if (out.pos_pairs) out.mean_pos_cos = pos_sum / out.pos_pairs;
    if (out.neg_pairs) out.mean_neg_cos = neg_sum / out.neg_pairs;
    out.gap = out.mean_pos_cos - out.mean_neg_cos;
    return out;
}

inline const char* projection_role_name(int role) {
    switch (role) {
        case 0: return "question-event";
        case 1: return "answer-event";
        case 2: return "other-event";
        default: return "non-event";
    }
}

// Transformed token vectors for a dataset sample, PCA-reduced to 2-D and
// written as "x <tab> y <tab> role <tab> instance" rows. Returns the row
// count (one per dumped token).
template <class T>
long project_embeddings(const Pipeline<T>& p, const std::vector<QAInstance>& instances,
                        int sample_n, const std::string& path) {
    if (instances.empty() || sample_n <= 0)
        throw ConfigError("project_embeddings: empty sample");
    const int take = std::min<int>(sample_n, int(instances.size()));
    std::vector<std::array<double, 2>> coords;  // filled after PCA
    std::vector<int> roles;
    std::vector<std::string> owners;
    std::vector<std::vector<double>> vectors;
    for (int i = 0; i < take; ++i) {
        const QAInstance& inst = instances[i];
        const InstanceEncoding enc = prepare_instance(p, inst, true);
        if (!enc.usable) continue;
        const Tensor<T> h = p.model.encode(enc.seq);
        std::vector<int> token_idx;
        std::vector<int> token_role;
        auto has = [](const std::vector<int>& v, int x) {
            return std::binary_search(v.begin(), v.end(), x);
        };
        for (int t = 0; t < enc.seq.length(); ++t) {
            const Segment seg = enc.seq.tokens[t].segment;
            if (seg != Segment::question && seg != Segment::paragraph) continue;
            int role = 3;
            if (has(enc.question_event_tokens, t)) role = 0;
            else if (has(enc.answer_event_tokens, t)) role = 1;
            else if (has(enc.other_event_tokens, t)) role = 2;
            token_idx.push_back(t);
            token_role.push_back(role);
        }
        const Tensor<T> rows = p.transform.apply(select_rows(h, token_idx));
        for (size_t r = 0; r < token_idx.size(); ++r) {
            std::vector<double> v(rows.cols());
            for (int c = 0; c < rows.cols(); ++c)
                v[c] = double(rows.values()[r * size_t(rows.cols()) + c]);
            vectors.push_back(std::move(v));
            roles.push_back(token_role[r]);
            owners.push_back(inst.id);
        }
    }
    if (vectors.empty()) throw ConfigError("project_embeddings: nothing to project");
    la::Mat data(int(vectors.size()), int(vectors[0].size()));
    for (int i = 0; i < data.rows(); ++i)
        for (int j = 0; j < data.cols(); ++j) data(i, j) = vectors[i][j];
    const la::Mat proj = la::pca2(data);

    std::ofstream out(path);
    if (!out) throw DataError("project_embeddings: cannot write '" + path + "'");
    out << "x\ty\trole\tinstance\n" << std::setprecision(8);
    for (int i = 0; i < proj.rows(); ++i)
        out << proj(i, 0) << '\t' << proj(i, 1) << '\t' << projection_role_name(roles[i])
            << '\t' << owners[i] << '\n';
    return proj.rows();
}

// ---------------------------------------------------------------------------
// Few-shot sweep
// ---------------------------------------------------------------------------

struct SweepPoint {
    int size = 0;
    long steps = 0;
    MetricsReport report;
};

// Trains one model per subset size on nested stratified subsets and
// evaluates each on the same held-out set. Size 0 is the zero-shot
// (untrained) condition.
template <class T>
std::vector<SweepPoint> fewshot_sweep(const RunConfig& cfg, const std::vector<int>& sizes,
                                      const std::vector<QAInstance>& train_set,
                                      const std::vector<QAInstance>& eval_set,
                                      std::ostream* info = nullptr) {
    for (size_t i = 1; i < sizes.size(); ++i)
        if (sizes[i - 1] > sizes[i]) throw ConfigError("sweep: sizes must be sorted");
    // Every condition shares the token table of the full training corpus.
    const Vocab vocab = build_run_vocab(train_set, cfg.vocab_min_count);
    std::vector<SweepPoint> points;
    for (int size : sizes) {
        const std::vector<QAInstance> subset = few_shot_subset(train_set, size, cfg.seed);
        RunConfig sub_cfg = cfg;
        sub_cfg.out_dir = cfg.out_dir + "/sweep_" + std::to_string(size);
        if (size == 0) sub_cfg.epochs = 0;  // zero-shot: untrained model
        if (info) *info << "sweep: size " << size << "\n";
        TrainResult<T> tr = size == 0 ? train<T>(sub_cfg, train_set, info, &vocab)
                                      : train<T>(sub_cfg, subset, info, &vocab);
        EvalResult ev = evaluate(tr.pipeline, eval_set, info);
        SweepPoint point;
        point.size = size;
        point.steps = tr.summary.steps;
        point.report = std::move(ev.report);
        points.push_back(std::move(point));
    }
    std::filesystem::create_directories(cfg.out_dir);
    nlohmann::json table = nlohmann::json::array();
    for (const auto& pt : points)
        table.push_back({{"size", pt.size},
                         {"steps", pt.steps},
                         {"f1t", pt.report.overall.f1t},
                         {"hit1", pt.report.overall.hit1},
                         {"em", pt.report.overall.em},
                         {"metrics", pt.report.to_json()}});
    std::ofstream out(cfg.out_dir + "/sweep.json");
    out << table.dump(1) << "\n";
    return points;
}

// ---------------------------------------------------------------------------
// Loss gradient verification
// ---------------------------------------------------------------------------

struct LossCheckCase {
    std::string name;
    GradCheckReport report;
};

// Finite-difference checks of every loss (and the combined objective) on
// random synthetic instances, in double precision with a tiny model. Each
// instance gets a freshly seeded pipeline.
inline std::vector<LossCheckCase> grad_check_losses(int instances_per_loss, std::uint64_t seed,
                                                    double tol = 1e-4,
                                                    long coords_per_param = 6) {
    SynthOptions opts;
    opts.distractor_rate = 3;
    const auto corpus =
        synth_generate(std::max(instances_per_loss + 5, 25), kDefaultTypeProportions, seed, opts);
    const Vocab vocab = build_run_vocab(corpus, 1);

    auto tiny_cfg = [&](Setting setting, std::uint64_t s) {
        RunConfig cfg;
        cfg.model.layers = 1;
        cfg.model.heads = 2;
        cfg.model.d = 8;
        cfg.model.ffn = 16;
        cfg.model.max_len = 96;
        cfg.model.setting = setting;
        cfg.seed = s;
        return cfg;
    };

    std::vector<LossCheckCase> out;
    for (int i = 0; i < instances_per_loss; ++i) {
        const QAInstance& inst = corpus[i];
        const std::uint64_t s = mix_seed(seed, 7000 + i);
        Pipeline<double> gen = Pipeline<double>::build(tiny_cfg(Setting::generative, s), vocab);
        Pipeline<double> ext = Pipeline<double>::build(tiny_cfg(Setting::extractive, s), vocab);
        const InstanceEncoding genc = prepare_instance(gen, inst, true);
        const InstanceEncoding eenc = prepare_instance(ext, inst, true);
        const std::uint64_t neg_seed = mix_seed(seed, 9000 + i);

        auto check = [&](const char* name, auto& pipeline, auto&& build) {
            LossCheckCase c;
            c.name = std::string(name) + "/" + inst.id;
            c.report = grad_check_params(build, pipeline.params, tol, 1e-5, coords_per_param,
                                         mix_seed(seed, 100 + i));
            out.push_back(std::move(c));
        };

        check("l_qa.generative", gen, [&] {
            const Tensor<double> h = gen.model.encode(genc.seq);
            std::vector<int> dec_inputs = {Vocab::kBos};
            dec_inputs.insert(dec_inputs.end(), genc.target_ids.begin(),
                              genc.target_ids.end() - 1);
            return generative_qa_loss(gen.model.decode_logits(h, dec_inputs), genc.target_ids);
        });
        check("l_qa.extractive", ext, [&] {
            const Tensor<double> h = ext.model.encode(eenc.seq);
            const auto labels = gold_tags(eenc.seq, eenc.answer_token_sets, Tagging::io);
            return extractive_qa_loss(ext.model.tag_logits(h, eenc.seq), labels, 4.0);
        });
        check("l_tc", gen, [&] {
            const Tensor<double> h = gen.model.encode(genc.seq);
            return type_classify(h, genc.question_tokens, gen.transform, gen.type_head,
                                 std::optional<RelationType>(inst.type))
                .loss;
        });
        check("l_cl", gen, [&] {
            const Tensor<double> h = gen.model.encode(genc.seq);
            const auto sets = collect_event_vectors(h, genc.question_event_tokens,
                                                    genc.answer_event_tokens,
                                                    genc.other_event_tokens, gen.transform);
            return contrastive_loss(sets, gen.cfg.tau, gen.cfg.k_neg, neg_seed).loss;
        });
        check("l_total.generative", gen, [&] {
            return compute_losses(gen, genc, inst, false, neg_seed).bundle.total;
        });
        check("l_total.extractive", ext, [&] {
            return compute_losses(ext, eenc, inst, false, neg_seed).bundle.total;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Property suites (CLI `check`)
// ---------------------------------------------------------------------------

inline la::Mat random_invertible(int d, std::mt19937_64& rng, double min_abs_det = 1e-6) {
    std::normal_distribution<double> normal(0, 1);
    for (;;) {
        la::Mat m(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) m(i, j) = normal(rng);
        if (std::abs(la::determinant(m)) > min_abs_det) return m;
    }
}

inline la::Mat random_covariance(int d, std::mt19937_64& rng, double jitter = 0.5) {
    std::normal_distribution<double> normal(0, 1);
    la::Mat a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = normal(rng);
    la::Mat cov = a * a.transposed();
    for (int i = 0; i < d; ++i) cov(i, i) += jitter;
    return cov;
}

// Runs the distribution-level property suites and the transform round-trip
// checks, printing one structured record per check.
inline bool run_property_checks(std::ostream& out, int draws = 100) {
    bool all_pass = true;
    std::mt19937_64 rng(2024);
    auto emit = [&](const PropertyRecord& r) {
        out << r.to_line() << "\n";
        all_pass = all_pass && r.pass;
    };

    const std::array<int, 3> dims = {2, 4, 8};
    for (int i = 0; i < draws; ++i) {
        const int d = dims[i % dims.size()];
        const la::Mat m = random_invertible(d, rng);
        const la::Mat cov = random_covariance(d, rng);
        std::vector<double> bias(d, 0.25);
        for (auto& rec : check_property1(m, bias, cov).records)
            if (i < 3 || !rec.pass) emit(rec);
            else all_pass = all_pass && rec.pass;
        la::Mat joint = random_covariance(2 * d, rng);
        for (auto& rec : check_property2(m, bias, joint).records)
            if (i < 3 || !rec.pass) emit(rec);
            else all_pass = all_pass && rec.pass;
    }
    out << "property1+2: " << draws << " random draws each checked\n";

    // Monte-Carlo entropy robustness on a small case.
    {
        std::mt19937_64 mc_rng(11);
        const la::Mat m = random_invertible(2, mc_rng);
        const la::Mat cov = random_covariance(2, mc_rng);
        auto report = check_property1(m, {0.0, 0.0}, cov, 1e-9, 50000, 0.05, 31);
        for (auto& rec : report.records) emit(rec);
    }

    // Initialization invertibility and inversion round trip.
    {
        int nonsingular = 0;
        const int trials = 1000;
        for (int i = 0; i < trials; ++i) {
            auto layer = TransformLayer<double>::near_identity(8, 9000 + i);
            if (layer.determinant() != 0.0) ++nonsingular;
        }
        PropertyRecord rec;
        rec.name = "init.nonsingular_rate";
        rec.expected = 1.0;
        rec.observed = double(nonsingular) / trials;
        rec.tolerance = 0.0;
        rec.pass = nonsingular == trials;
        emit(rec);

        auto layer = TransformLayer<double>::near_identity(16, 77);
        std::normal_distribution<double> normal(0, 1);
        la::Mat pts(200, 16);
        for (int i = 0; i < pts.rows(); ++i)
            for (int j = 0; j < 16; ++j) pts(i, j) = normal(rng);
        Tensor<double> rows = Tensor<double>::from(200, 16, pts.data());
        const Tensor<double> mapped = layer.apply(rows);
        la::Mat mapped_mat(200, 16);
        for (int i = 0; i < 200; ++i)
            for (int j = 0; j < 16; ++j)
                mapped_mat(i, j) = mapped.values()[size_t(i) * 16 + j];
        const la::Mat back = layer.invert_rows(mapped_mat);
        double worst = 0;
        for (int i = 0; i < 200; ++i)
            for (int j = 0; j < 16; ++j)
                worst = std::max(worst, std::abs(back(i, j) - pts(i, j)));
        PropertyRecord rt;
        rt.name = "invert.round_trip_inf_norm";
        rt.expected = 0.0;
        rt.observed = worst;
        rt.tolerance = 1e-6;
        rt.pass = worst <= 1e-6;
        emit(rt);
    }
    return all_pass;
}

}  // namespace evqa
