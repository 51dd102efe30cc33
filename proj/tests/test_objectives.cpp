#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "evqa/gradcheck.hpp"
#include "evqa/objectives.hpp"

using namespace evqa;

namespace {

EventVectorSets<double> make_sets(std::vector<std::vector<double>> q,
                                  std::vector<std::vector<double>> a,
                                  std::vector<std::vector<double>> o) {
    auto pack = [](const std::vector<std::vector<double>>& rows) {
        const int d = rows.empty() ? 2 : int(rows[0].size());
        std::vector<double> flat;
        for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
        return Tensor<double>::from(int(rows.size()), d, flat);
    };
    EventVectorSets<double> sets;
    sets.question = pack(q);
    sets.answer = pack(a);
    sets.other = pack(o);
    sets.cq = int(q.size());
    sets.ca = int(a.size());
    sets.co = int(o.size());
    return sets;
}

}  // namespace

TEST_CASE("collect_event_vectors partitions and counts trigger rows", "[objectives]") {
    std::mt19937_64 rng(1);
    auto h = Tensor<double>::randn(8, 4, rng, 1.0, true);
    auto tr = TransformLayer<double>::near_identity(4, 2, 0.0);  // exact identity
    auto sets = collect_event_vectors(h, {1}, {3, 4}, {0, 6, 7}, tr);
    REQUIRE(sets.cq == 1);
    REQUIRE(sets.ca == 2);
    REQUIRE(sets.co == 3);
    // identity transform: rows equal the raw H rows
    for (int j = 0; j < 4; ++j) {
        REQUIRE(sets.question.values()[j] == h.values()[1 * 4 + j]);
        REQUIRE(sets.answer.values()[j] == h.values()[3 * 4 + j]);
    }
    REQUIRE_THROWS_AS(collect_event_vectors(h, {1}, {1, 2}, {}, tr), ContractError);
}

TEST_CASE("no paragraph events skips the contrastive loss", "[objectives]") {
    auto sets = make_sets({{1.0, 0.0}}, {}, {});
    auto result = contrastive_loss(sets, 1.0, 2, 7);
    REQUIRE(result.skipped);
    REQUIRE(result.loss.item() == 0.0);
}

TEST_CASE("negative sampling clamps, dedups and is seed-deterministic", "[objectives]") {
    std::mt19937_64 rng(3);
    auto idx = sample_negative_indices(5, 2, rng);
    REQUIRE(idx.size() == 2);
    REQUIRE(idx[0] != idx[1]);

    std::mt19937_64 rng2(3);
    REQUIRE(sample_negative_indices(5, 2, rng2) == idx);

    std::mt19937_64 rng3(9);
    REQUIRE(sample_negative_indices(1, 2, rng3).size() == 1);

    auto other = Tensor<double>::from(3, 2, {1, 2, 3, 4, 5, 6});
    REQUIRE(sample_negatives(other, 2, 11).rows() == 2);
    REQUIRE(sample_negatives(other, 2, 11).values() == sample_negatives(other, 2, 11).values());
}

TEST_CASE("contrastive worked value: cos(pos)=1, two zero-cos negatives", "[objectives]") {
    auto sets = make_sets({{1.0, 0.0}}, {{1.0, 0.0}}, {{0.0, 1.0}, {0.0, 1.0}});
    auto result = contrastive_loss(sets, 1.0, 2, 5);
    REQUIRE_FALSE(result.skipped);
    REQUIRE(result.pair_terms == 2);
    const double l = std::log((std::exp(1.0) + 2.0) / std::exp(1.0));
    REQUIRE(l == Catch::Approx(0.5514).margin(5e-5));
    // both directions contribute the same l; Z = 2 (C_q + C_a) = 4
    REQUIRE(result.loss.item() == Catch::Approx(2.0 * l / 4.0).epsilon(1e-9));
}

TEST_CASE("contrastive loss is ln(N+1) when all cosines agree", "[objectives]") {
    for (int n_neg = 1; n_neg <= 4; ++n_neg) {
        std::vector<std::vector<double>> others(n_neg, {2.0, 0.0});
        auto sets = make_sets({{1.0, 0.0}}, {{3.0, 0.0}}, others);
        auto result = contrastive_loss(sets, 1.0, n_neg, 5);
        const double l = std::log(double(n_neg) + 1.0);
        REQUIRE(result.loss.item() == Catch::Approx(2.0 * l / 4.0).epsilon(1e-9));
    }
}

TEST_CASE("contrastive loss without negatives is exactly zero", "[objectives]") {
    auto sets = make_sets({{1.0, 0.5}}, {{0.3, 0.9}}, {});
    auto result = contrastive_loss(sets, 1.0, 2, 5);
    REQUIRE_FALSE(result.skipped);
    REQUIRE(result.loss.item() == 0.0);
}

TEST_CASE("contrastive loss is non-negative and monotone in negative similarity",
          "[objectives]") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal(0, 1);
    for (int trial = 0; trial < 30; ++trial) {
        auto vec = [&] { return std::vector<double>{normal(rng), normal(rng), normal(rng)}; };
        auto sets = make_sets({vec()}, {vec(), vec()}, {vec(), vec(), vec()});
        auto result = contrastive_loss(sets, 0.7, 2, trial);
        REQUIRE(result.loss.item() >= 0.0);
    }

    // pulling the negative closer to the anchor raises the loss
    auto low = make_sets({{1.0, 0.0}}, {{1.0, 0.2}}, {{-1.0, 0.1}});
    auto high = make_sets({{1.0, 0.0}}, {{1.0, 0.2}}, {{1.0, 0.1}});
    REQUIRE(contrastive_loss(high, 1.0, 1, 0).loss.item() >
            contrastive_loss(low, 1.0, 1, 0).loss.item());
}

TEST_CASE("contrastive loss is symmetric under swapping the pair roles", "[objectives]") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal(0, 1);
    auto vec = [&] { return std::vector<double>{normal(rng), normal(rng)}; };
    const auto q = vec();
    const auto a1 = vec();
    const auto a2 = vec();
    const auto o1 = vec();
    const auto o2 = vec();
    // k_neg >= C_o makes the negative sample the whole pool, so the swap is exact
    auto fwd = contrastive_loss(make_sets({q}, {a1, a2}, {o1, o2}), 1.0, 5, 1);
    auto swp = contrastive_loss(make_sets({a1, a2}, {q}, {o1, o2}), 1.0, 5, 2);
    REQUIRE(fwd.loss.item() == Catch::Approx(swp.loss.item()).epsilon(1e-12));
}

TEST_CASE("temperature must be positive", "[objectives]") {
    auto sets = make_sets({{1.0, 0.0}}, {{0.0, 1.0}}, {});
    REQUIRE_THROWS_AS(contrastive_loss(sets, 0.0, 2, 1), ConfigError);
    REQUIRE_THROWS_AS(contrastive_loss(sets, -1.0, 2, 1), ConfigError);
}

TEST_CASE("contrastive loss passes the finite-difference check", "[objectives]") {
    std::mt19937_64 rng(6);
    auto h = Tensor<double>::randn(7, 4, rng, 1.0, true);
    auto tr = TransformLayer<double>::near_identity(4, 3);
    ParamSet<double> params;
    params.add("h", h, true);
    tr.register_params(params);
    auto build = [&] {
        auto sets = collect_event_vectors(h, {0}, {2, 3}, {4, 5, 6}, tr);
        return contrastive_loss(sets, 0.8, 2, 999).loss;
    };
    auto report = grad_check_params(build, params, 1e-4);
    INFO(report.worst);
    REQUIRE(report.pass);
}

TEST_CASE("type classification spot values", "[objectives]") {
    auto tr = TransformLayer<double>::near_identity(1, 1, 0.0);
    TypeClassifier<double> head;
    head.w = Tensor<double>::zeros(1, 5, true);
    head.b = Tensor<double>::zeros(1, 5, true);
    auto h = Tensor<double>::from(1, 1, {1.0});

    // uniform logits -> ln 5
    auto uniform = type_classify(h, {0}, tr, head, RelationType::causal);
    REQUIRE(uniform.has_loss);
    REQUIRE(uniform.loss.item() == Catch::Approx(std::log(5.0)).epsilon(1e-12));

    // logits [2,0,0,0,0], gold type 0 -> ln(e^2 + 4) - 2
    head.w.mutable_values() = {2, 0, 0, 0, 0};
    auto spot = type_classify(h, {0}, tr, head, RelationType::causal);
    const double expected = std::log(std::exp(2.0) + 4.0) - 2.0;  // 0.43265...
    REQUIRE(expected == Catch::Approx(0.4325).margin(2e-4));
    REQUIRE(spot.loss.item() == Catch::Approx(expected).epsilon(1e-12));
    REQUIRE(spot.predicted == RelationType::causal);

    // near-one-hot correct logits -> loss near zero
    head.w.mutable_values() = {30, 0, 0, 0, 0};
    auto sharp = type_classify(h, {0}, tr, head, RelationType::causal);
    REQUIRE(sharp.loss.item() == Catch::Approx(0.0).margin(1e-9));

    REQUIRE_THROWS_AS(type_classify(h, {}, tr, head, std::nullopt), ContractError);
}

TEST_CASE("generative target layout and loss values", "[objectives]") {
    Vocab v = Vocab::build({"a b c"}, 1);
    const auto ids = generative_target_ids({"a b", "c"}, v);
    // content "a b ; c" -> T = 4, plus the end token
    REQUIRE(target_content_length(ids) == 4);
    REQUIRE(ids.size() == 5);
    REQUIRE(ids[2] == Vocab::kAnswerSep);
    REQUIRE(ids[4] == Vocab::kEos);
    REQUIRE_THROWS_AS(generative_target_ids({}, v), DataError);

    const int vocab_size = v.size();
    auto uniform_logits = Tensor<double>::zeros(int(ids.size()), vocab_size);
    REQUIRE(generative_qa_loss(uniform_logits, ids).item() ==
            Catch::Approx(std::log(double(vocab_size))).epsilon(1e-12));

    std::vector<double> sharp(ids.size() * size_t(vocab_size), 0.0);
    for (size_t i = 0; i < ids.size(); ++i) sharp[i * vocab_size + ids[i]] = 50.0;
    auto sharp_logits = Tensor<double>::from(int(ids.size()), vocab_size, sharp);
    REQUIRE(generative_qa_loss(sharp_logits, ids).item() == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("extractive loss weights non-O labels", "[objectives]") {
    // 3 tokens, gold [O, I, O], uniform 2-class logits -> (1+4+1) ln2 / 6 = ln 2
    auto logits = Tensor<double>::zeros(3, 2);
    auto loss = extractive_qa_loss(logits, {kTagO, kTagI, kTagO}, 4.0);
    REQUIRE(loss.item() == Catch::Approx(std::log(2.0)).epsilon(1e-12));

    // perfect logits -> 0
    auto sharp = Tensor<double>::from(3, 2, {50, 0, 0, 50, 50, 0});
    REQUIRE(extractive_qa_loss(sharp, {kTagO, kTagI, kTagO}, 4.0).item() ==
            Catch::Approx(0.0).margin(1e-9));

    // all-O gold, uniform logits -> ln 2 (weights all 1)
    REQUIRE(extractive_qa_loss(logits, {kTagO, kTagO, kTagO}, 4.0).item() ==
            Catch::Approx(std::log(2.0)).epsilon(1e-12));

    REQUIRE_THROWS_AS(extractive_qa_loss(logits, {kTagO}, 4.0), ShapeError);
}

TEST_CASE("tag spans read contiguous runs", "[objectives]") {
    // "O I I O I" -> [1..2] and [4..4]
    const auto spans = spans_from_tags({kTagO, kTagI, kTagI, kTagO, kTagI});
    REQUIRE(spans == std::vector<std::pair<int, int>>{{1, 2}, {4, 4}});
    REQUIRE(spans_from_tags({kTagO, kTagO}).empty());
    // BIO: B opens a new span even adjacent to I
    const auto bio = spans_from_tags({kTagB, kTagI, kTagB, kTagI});
    REQUIRE(bio == std::vector<std::pair<int, int>>{{0, 1}, {2, 3}});
}

TEST_CASE("combined objective follows the additive identity", "[objectives]") {
    auto qa = Tensor<double>::scalar(1.0);
    auto tc = Tensor<double>::scalar(2.0);
    auto cl = Tensor<double>::scalar(3.0);

    auto both_zero = total_loss<double>(qa, tc, cl, 0.0, 0.0);
    REQUIRE(both_zero.combined == 1.0);

    auto bundle = total_loss<double>(qa, tc, cl, 0.1, 0.1);
    REQUIRE(bundle.combined == Catch::Approx(1.5).epsilon(1e-12));
    REQUIRE(bundle.combined == bundle.qa + bundle.lambda_tc * bundle.tc +
                                   bundle.lambda_cl * bundle.cl);

    // ablated components enter as exact zeros
    auto no_tc = total_loss<double>(qa, std::nullopt, cl, 0.1, 0.1);
    REQUIRE(no_tc.tc == 0.0);
    REQUIRE(no_tc.combined == no_tc.qa + no_tc.lambda_tc * no_tc.tc +
                                  no_tc.lambda_cl * no_tc.cl);
    auto no_both = total_loss<double>(qa, std::nullopt, std::nullopt, 0.1, 0.1);
    REQUIRE(no_both.combined == 1.0);

    REQUIRE_THROWS_AS(total_loss<double>(qa, tc, cl, -0.1, 0.1), ConfigError);
}
