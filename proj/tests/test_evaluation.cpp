#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "support.hpp"

using namespace hnn;
using hnn::testing::make_instance;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

Instance with_labels(const std::string& id, const std::vector<Label>& labels) {
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < labels.size(); ++i) cands.push_back({"the thing" + std::to_string(i), labels[i]});
    return make_instance(id, "it was there.", "it", cands);
}

}  // namespace

TEST(Ranking, PicksArgmax) {
    const std::vector<Instance> insts{with_labels("a", {Label::positive, Label::negative}),
                                      with_labels("b", {Label::negative, Label::positive}),
                                      with_labels("c", {Label::positive, Label::negative})};
    const auto r = rank_scores(insts, {{0.9, 0.2}, {0.6, 0.4}, {0.1, 0.3}});
    EXPECT_EQ(r.n_instances, 3u);
    EXPECT_EQ(r.n_correct, 1u);
    EXPECT_NEAR(r.accuracy, 1.0 / 3.0, 1e-15);
    EXPECT_EQ(r.records[1].prediction, std::vector<std::size_t>{0});
    EXPECT_EQ(r.records[1].gold, std::vector<std::size_t>{1});
}

TEST(Ranking, TiesGoToLowestIndex) {
    const std::vector<Instance> insts{with_labels("a", {Label::negative, Label::positive, Label::negative})};
    const auto r = rank_scores(insts, {{0.5, 0.5, 0.5}});
    EXPECT_EQ(r.records[0].prediction[0], 0u);
    EXPECT_EQ(r.accuracy, 0.0);
    EXPECT_EQ(rank_scores(insts, {{0.2, 0.7, 0.7}}).records[0].prediction[0], 1u);
}

TEST(Ranking, FiveCandidatesGoldThird) {
    const std::vector<Instance> insts{
        with_labels("f", {Label::negative, Label::negative, Label::positive, Label::negative, Label::negative})};
    const auto r = rank_scores(insts, {{0.9, 0.8, 0.7, 0.1, 0.2}});
    EXPECT_EQ(r.records[0].prediction[0], 0u);
    EXPECT_EQ(r.accuracy, 0.0);
}

TEST(Ranking, SkipsInstancesWithoutPositive) {
    const std::vector<Instance> insts{with_labels("a", {Label::positive, Label::negative}),
                                      with_labels("u", {Label::unknown, Label::unknown}),
                                      with_labels("n", {Label::negative, Label::negative})};
    const auto r = rank_scores(insts, {{0.9, 0.2}, {0.1, 0.2}, {0.3, 0.3}});
    EXPECT_EQ(r.n_instances, 1u);
    EXPECT_EQ(r.skipped, 2u);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_THROW(rank_scores(insts, {{0.9, 0.2}}), DimensionError);
    EXPECT_THROW(rank_scores(insts, {{0.9}, {0.1, 0.2}, {0.3, 0.3}}), DimensionError);
}

TEST(Ranking, ReportJsonShape) {
    const std::vector<Instance> insts{with_labels("a", {Label::positive, Label::negative})};
    const auto j = to_json(rank_scores(insts, {{0.9, 0.2}}));
    EXPECT_EQ(j.at("formulation"), "ranking");
    EXPECT_EQ(j.at("accuracy"), 1.0);
    EXPECT_TRUE(j.at("threshold").is_null());
    EXPECT_EQ(j.at("records")[0].at("id"), "a");
}

TEST(Threshold, SeparableExample) {
    const auto fit = scan_threshold({0.2, 0.8}, {0, 1});
    EXPECT_EQ(fit.threshold, 0.5);
    EXPECT_EQ(fit.accuracy, 1.0);
    EXPECT_FALSE(fit.degenerate);
}

TEST(Threshold, EqualScoresGiveMajorityRate) {
    const auto fit = scan_threshold({0.5, 0.5, 0.5}, {1, 0, 0});
    EXPECT_EQ(fit.threshold, kInf);
    EXPECT_NEAR(fit.accuracy, 2.0 / 3.0, 1e-15);
    const auto fit2 = scan_threshold({0.5, 0.5, 0.5}, {1, 1, 0});
    EXPECT_EQ(fit2.threshold, -kInf);
    EXPECT_NEAR(fit2.accuracy, 2.0 / 3.0, 1e-15);
}

TEST(Threshold, TiedCutsPickSmallest) {
    // 0.25 and 0.75 both reach 3/4
    const auto fit = scan_threshold({0.1, 0.4, 0.6, 0.9}, {0, 1, 0, 1});
    EXPECT_EQ(fit.threshold, 0.25);
    EXPECT_EQ(fit.accuracy, 0.75);
}

TEST(Threshold, SingleClassIsDegenerate) {
    const auto pos = scan_threshold({0.1, 0.3}, {1, 1});
    EXPECT_TRUE(pos.degenerate);
    EXPECT_EQ(pos.threshold, -kInf);
    EXPECT_EQ(pos.accuracy, 1.0);
    ASSERT_TRUE(pos.warning.has_value());
    const auto neg = scan_threshold({0.1, 0.3}, {0, 0});
    EXPECT_EQ(neg.threshold, kInf);
    EXPECT_THROW(scan_threshold({}, {}), DataError);
    EXPECT_THROW(scan_threshold({0.1}, {1, 0}), DimensionError);
    EXPECT_THROW(scan_threshold({std::nan("")}, {1}), DomainError);
    EXPECT_THROW(scan_threshold({0.1}, {2}), DataError);
}

TEST(Threshold, MatchesExhaustiveOracle) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng() % 12;
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % 6) / 5.0;  // coarse grid forces ties
            y[i] = static_cast<int>(rng() % 2);
        }
        double best_acc = -1.0, best_t = 0.0;
        for (double t : oracle::threshold_candidates(s)) {
            const double a = oracle::threshold_accuracy(s, y, t);
            if (a > best_acc) {
                best_acc = a;
                best_t = t;
            }
        }
        const auto fit = scan_threshold(s, y);
        EXPECT_NEAR(fit.accuracy, best_acc, 1e-15) << trial;
        if (std::isinf(best_t)) {
            EXPECT_EQ(fit.threshold, best_t) << trial;
        } else {
            EXPECT_NEAR(fit.threshold, best_t, 1e-15) << trial;  // midpoint rounding may differ
        }
        EXPECT_NEAR(oracle::threshold_accuracy(s, y, fit.threshold), fit.accuracy, 1e-15);
    }
}

TEST(Threshold, JsonInfinities) {
    EXPECT_EQ(threshold_to_json(-kInf), "-inf");
    EXPECT_EQ(threshold_to_json(kInf), "+inf");
    EXPECT_EQ(threshold_to_json(0.25), 0.25);
    EXPECT_EQ(threshold_from_json("+inf"), kInf);
    EXPECT_EQ(threshold_from_json(threshold_to_json(0.3)), 0.3);
    EXPECT_THROW(threshold_from_json("inf"), ParseError);
}

TEST(Classification, AllAboveThresholdLabelsEverythingPositive) {
    const std::vector<Instance> dev{with_labels("d", {Label::positive, Label::negative})};
    const std::vector<Instance> test{with_labels("t", {Label::positive, Label::negative, Label::negative})};
    const auto r = classify_scores(dev, {{0.8, 0.2}}, test, {{0.6, 0.7, 0.9}});
    EXPECT_EQ(*r.threshold, 0.5);
    EXPECT_EQ(r.records[0].prediction, (std::vector<std::size_t>{1, 1, 1}));
    EXPECT_EQ(r.n_instances, 3u);
    EXPECT_NEAR(r.accuracy, 1.0 / 3.0, 1e-15);
}

TEST(Classification, DevAccuracyAtLeastMajorityRate) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Instance> dev;
        std::vector<std::vector<double>> scores;
        std::size_t pos = 0, total = 0;
        for (int i = 0; i < 10; ++i) {
            const std::size_t n = 2 + rng() % 3;
            std::vector<Label> labels(n, Label::negative);
            labels[rng() % n] = Label::positive;
            dev.push_back(with_labels("d" + std::to_string(i), labels));
            std::vector<double> s;
            for (std::size_t c = 0; c < n; ++c) s.push_back(u(rng));
            scores.push_back(s);
            pos += 1;
            total += n;
        }
        const auto r = classify_scores(dev, scores, dev, scores);
        const double majority = std::max(pos, total - pos) / static_cast<double>(total);
        EXPECT_GE(r.accuracy + 1e-15, majority) << trial;
    }
}

TEST(Classification, UnknownLabelsAreNotCounted) {
    const std::vector<Instance> dev{with_labels("d", {Label::positive, Label::negative, Label::unknown})};
    const std::vector<Instance> test{with_labels("t", {Label::unknown, Label::positive}),
                                     with_labels("u", {Label::unknown})};
    const auto r = classify_scores(dev, {{0.8, 0.2, 0.0}}, test, {{0.1, 0.9}, {0.5}});
    EXPECT_EQ(*r.threshold, 0.5);
    EXPECT_EQ(r.n_instances, 1u);
    EXPECT_EQ(r.skipped, 1u);
    EXPECT_EQ(r.accuracy, 1.0);
}

TEST(Comparison, RendersBothRows) {
    FormulationComparison c;
    c.ranking.accuracy = 0.75;
    c.classification.accuracy = 0.625;
    c.classification.threshold = 0.4;
    EXPECT_EQ(to_markdown(c), "| Formulation | Accuracy |\n|---|---|\n| Ranking | 75.0 |\n| Classification | 62.5 |\n");
    const auto j = to_json(c);
    EXPECT_EQ(j.at("rows")[0].at("formulation"), "ranking");
    EXPECT_EQ(j.at("rows")[1].at("threshold"), 0.4);
}

TEST(Ablation, VariantsDropTheRightPieces) {
    const RunConfig base;
    const auto s = apply_variant(base, Variant::no_ssm);
    EXPECT_FALSE(s.model.use_ssm);
    EXPECT_FALSE(s.train.loss.enable_ssm);
    EXPECT_TRUE(s.train.loss.enable_rank);
    const auto m = apply_variant(base, Variant::no_mlm);
    EXPECT_FALSE(m.model.use_mlm);
    EXPECT_FALSE(m.train.loss.enable_mlm);
    const auto r = apply_variant(base, Variant::no_rank);
    EXPECT_FALSE(r.train.loss.enable_rank);
    EXPECT_TRUE(r.model.use_mlm && r.model.use_ssm);
    for (Variant v : all_variants()) EXPECT_NO_THROW(apply_variant(base, v).validate());
}

TEST(Ablation, NoSsmRanksLikePureMlm) {
    std::mt19937_64 rng(11);
    std::vector<Instance> insts;
    for (int i = 0; i < 30; ++i) insts.push_back(oracle::random_instance(rng, "r" + std::to_string(i), 3));
    const Vocab vocab = corpus_vocab({&insts});
    EncoderConfig e;
    e.vocab_size = vocab.size();
    e.d_model = 8;
    e.num_layers = 1;
    e.num_heads = 2;
    e.init_stddev = 0.5;
    ModelOptions opts;
    opts.use_ssm = false;
    const auto model = HnnModel::create(e, opts, 4);
    const auto preds = rank_predictions(insts, score_corpus(model, vocab, insts));
    for (std::size_t i = 0; i < insts.size(); ++i) {
        std::vector<double> mlm;
        for (std::size_t c = 0; c < 3; ++c) mlm.push_back(oracle::mlm_score(model, pack_mlm(vocab, insts[i], c, e.max_positions)));
        EXPECT_EQ(preds[i].predicted, argmax_first(mlm)) << insts[i].id;
    }
}

TEST(Ablation, ArgmaxInvariantUnderMonotoneTransform) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Instance> insts;
    std::vector<std::vector<double>> s, t;
    for (int i = 0; i < 200; ++i) {
        insts.push_back(with_labels("m" + std::to_string(i), {Label::positive, Label::negative, Label::negative}));
        std::vector<double> row{u(rng), u(rng), u(rng)}, tr;
        for (double x : row) tr.push_back(std::log(x / (1 - x)) * 3.0 + 1.0);
        s.push_back(row);
        t.push_back(tr);
    }
    EXPECT_EQ(rank_scores(insts, s).accuracy, rank_scores(insts, t).accuracy);
}

TEST(Ablation, TableFormats) {
    AblationTable t;
    t.columns = {"WSC", "PDP"};
    t.rows = {Variant::full, Variant::no_ssm};
    t.cells = {{{0.5, 1, {}}, {0.875, 2, {}}}, {{0.25, 1, {}}, {1.0, 3, {}}}};
    EXPECT_EQ(to_markdown(t), "| Model | WSC | PDP |\n|---|---|---|\n| HNN | 50.0 | 87.5 |\n| -SSM | 25.0 | 100.0 |\n");
    const auto j = to_json(t);
    EXPECT_EQ(j.at("rows")[1].at("variant"), "-SSM");
    EXPECT_EQ(j.at("rows")[0].at("accuracy").at("PDP"), 0.875);
    EXPECT_THROW(ablation_matrix({}, RunConfig{}), ConfigError);
}

TEST(Predictions, JsonRoundTrip) {
    const InstancePrediction p{"x", 1, {0.25, 0.75}, 1};
    const auto back = prediction_from_json(to_json(p));
    EXPECT_EQ(back.id, "x");
    EXPECT_EQ(back.predicted, 1u);
    EXPECT_EQ(back.scores, p.scores);
    EXPECT_EQ(back.gold, p.gold);
    auto bad = to_json(p);
    bad["prediction"] = 2;
    EXPECT_THROW(prediction_from_json(bad), ParseError);
    EXPECT_THROW(prediction_from_json(nlohmann::json{{"id", "x"}}), ParseError);
}
