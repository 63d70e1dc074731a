// Runs the ten acceptance checks and prints one PASS/FAIL line for each.
// Exit status is nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hnn/hnn.hpp"
#include "oracles.hpp"

using namespace hnn;
using Clock = std::chrono::steady_clock;

namespace {

const std::filesystem::path kData = HNN_TEST_DATA_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
    GradcheckConfig cfg;
    merge_json(read_json_file(kData / "tiny.json"), cfg);
    const auto t0 = Clock::now();
    const auto r = run_gradcheck(cfg);
    const double secs = seconds_since(t0);
    return {r.passed() && r.max_rel_err < 1e-4 && secs < 60.0,
            fmt("%.0f entries, %.0f failed, max rel err %.2e, %.1f s", double(r.n_checked), double(r.n_failed),
                r.max_rel_err, secs)};
}

HnnModel random_tiny_model(std::mt19937_64& rng, std::size_t vocab_size, bool use_mlm, bool use_ssm) {
    EncoderConfig e;
    e.vocab_size = vocab_size;
    e.d_model = 4 + 4 * (rng() % 3);
    e.num_heads = e.d_model % 8 == 0 ? 2 : 1;
    e.num_layers = 1 + rng() % 2;
    e.max_positions = 40;
    e.init_stddev = 0.05 + 0.5 * static_cast<double>(rng() % 100) / 100.0;
    e.tie_mlm_weights = rng() % 2 == 0;
    ModelOptions o;
    o.use_mlm = use_mlm;
    o.use_ssm = use_ssm;
    o.head_init_stddev = 0.3;
    return HnnModel::create(e, o, rng());
}

Outcome mlm_oracle() {
    std::mt19937_64 rng(101);
    double worst = 0.0, worst_single = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = oracle::random_instance(rng, "m" + std::to_string(trial), 2);
        const std::vector<Instance> one_inst{inst};
        const Vocab vocab = corpus_vocab({&one_inst});
        const auto model = random_tiny_model(rng, vocab.size(), true, true);
        for (std::size_t c = 0; c < 2; ++c) {
            const auto ex = pack_mlm(vocab, inst, c, model.config.max_positions);
            worst = std::max(worst, std::abs(score_mlm(model, ex) - oracle::mlm_score(model, ex)));
        }
        // single-token candidate: the plain softmax probability at the one mask
        Instance one = inst;
        one.candidates[0].text = "it";
        const auto ex = pack_mlm(vocab, one, 0, model.config.max_positions);
        const Tensor hidden = encode(model.config, model.encoder, EncoderInput::unpadded(ex.token_ids, ex.segment_ids));
        const auto probs = softmax_last_dim(mlm_logits(model.config, model.encoder, hidden, ex.mask_positions));
        worst_single = std::max(worst_single, std::abs(score_mlm(model, ex) - probs.at(0, ex.target_token_ids[0])));
    }
    return {worst <= 1e-12 && worst_single == 0.0,
            fmt("max |diff| %.2e over 200 candidates; N=1 max |diff| %.2e", worst, worst_single)};
}

Outcome ssm_oracle() {
    std::mt19937_64 rng(202);
    double worst = 0.0, worst_sum = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = oracle::random_instance(rng, "s" + std::to_string(trial), 2);
        const std::vector<Instance> one_inst{inst};
        const Vocab vocab = corpus_vocab({&one_inst});
        const auto model = random_tiny_model(rng, vocab.size(), true, true);
        for (std::size_t c = 0; c < 2; ++c) {
            const auto ex = pack_ssm(vocab, inst, c, model.config.max_positions, model.options.trailing_sep);
            const auto want = oracle::ssm_score(model, ex);
            worst = std::max(worst, std::abs(score_ssm(model, ex) - want.prob));
            const Tensor hidden =
                encode(model.config, model.encoder, EncoderInput::unpadded(ex.token_ids, ex.segment_ids));
            const auto pooled = pool_candidate(hidden, model.head.w1, ex.cls_position, ex.candidate_positions);
            double s = 0.0;
            for (double a : pooled.alphas.data()) s += a;
            worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        }
    }
    return {worst <= 1e-10 && worst_sum <= 1e-12,
            fmt("max |diff| %.2e over 200 candidates; max |sum alpha - 1| %.2e", worst, worst_sum)};
}

Outcome rank_anchors() {
    LossConfig cfg;
    cfg.gamma = 10.0;
    cfg.beta = 0.6;
    const double a = rank_loss_at(-cfg.beta, cfg.gamma, cfg.beta, MarginSign::plus);
    const double b = rank_loss_at(0.0, cfg.gamma, cfg.beta, MarginSign::plus);
    bool shape = true;
    std::vector<double> grid;
    for (int i = -200; i <= 200; ++i) grid.push_back(i / 100.0);
    for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
        const double l0 = rank_loss_at(grid[i - 1], cfg.gamma, cfg.beta, MarginSign::plus);
        const double l1 = rank_loss_at(grid[i], cfg.gamma, cfg.beta, MarginSign::plus);
        const double l2 = rank_loss_at(grid[i + 1], cfg.gamma, cfg.beta, MarginSign::plus);
        shape = shape && l1 < l0 && l2 < l1 && l0 - 2 * l1 + l2 >= -1e-15;
    }
    const double ea = std::abs(a - std::log(2.0)), eb = std::abs(b - std::log1p(std::exp(-6.0)));
    return {ea <= 1e-12 && eb <= 1e-12 && shape,
            fmt("|L(-beta) - ln2| %.1e, |L(0) - log(1+e^-6)| %.1e, decreasing+convex on grid: ", ea, eb) +
                (shape ? "yes" : "no")};
}

Outcome converter_golden() {
    const auto pairs = read_nli_tsv(kData / "wnli_sample.tsv");
    const std::vector<std::string> want{"the cookstove", "the kitchen", "the lamplight"};
    bool ok = pairs.size() == 3;
    for (std::size_t i = 0; ok && i < pairs.size(); ++i) {
        const auto e = convert_nli_pair(pairs[i]);
        // inclusive token ranges in the hypothesis
        ok = ok && e.left_match.begin == 0 && e.left_match.end - 1 == 2;
        ok = ok && e.right_match.begin == 5 && e.right_match.end - 1 == 7;
        ok = ok && e.candidate_text == want[i];
    }
    if (!ok) return {false, "LCS ranges or candidate texts differ from the golden values"};
    ConversionReport report;
    const auto insts = convert_corpus(pairs, report);
    ok = insts.size() == 1 && insts[0].candidates.size() == 3;
    std::string got;
    if (ok) {
        for (std::size_t c = 0; c < 3; ++c) {
            ok = ok && insts[0].candidates[c].text == want[c] &&
                 insts[0].candidates[c].label == (c == 1 ? Label::positive : Label::negative);
        }
        got = insts[0].candidates[*insts[0].positive_index()].text;
    }
    return {ok, "left [0,2], right [5,7], one instance, positive '" + got + "'"};
}

Outcome lcs_oracle() {
    std::mt19937_64 rng(606);
    const std::vector<std::string> alphabet{"a", "b", "c", "A", "B", "d"};
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto draw = [&] {
            std::vector<std::string> v(rng() % 13);
            for (auto& w : v) w = alphabet[rng() % alphabet.size()];
            return v;
        };
        const auto a = draw(), b = draw();
        const auto got = token_lcs(a, b);
        const auto want = oracle::brute_lcs(a, b);
        const bool same = got.length == want.length &&
                          (want.length == 0 || (got.a.begin == want.a.begin && got.a.end == want.a.end &&
                                                got.b.begin == want.b.begin && got.b.end == want.b.end));
        mismatches += same ? 0 : 1;
    }
    return {mismatches == 0, fmt("%.0f mismatches in 1000 cases", double(mismatches))};
}

// ---------------------------------------------------------------------------
// Training-based checks share the desk recipe and corpus.

struct DeskRun {
    TrainResult result;
    double max_train_accuracy = 0.0;
    std::vector<std::string> metrics;
};

struct Desk {
    RunConfig cfg;
    SyntheticSplits splits;
    Vocab vocab;
};

Desk desk_setup() {
    Desk d;
    d.cfg = load_run_config(kData / "desk.json");
    d.splits = build_synthetic_splits(SyntheticTemplates{}, 7, 200, 50, 50);
    d.vocab = corpus_vocab({&d.splits.train, &d.splits.dev, &d.splits.test});
    return d;
}

DeskRun desk_train(const Desk& d, Variant v) {
    const RunConfig cfg = apply_variant(d.cfg, v);
    DeskRun run;
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r, const HnnModel&) {
        run.max_train_accuracy = std::max(run.max_train_accuracy, r.train_accuracy.value_or(0.0));
        run.metrics.push_back(metrics_json(r).dump());
    };
    run.result = train(make_model(cfg, d.vocab), d.vocab, d.splits.train, d.splits.dev, cfg.resolved_train(), hooks);
    return run;
}

Outcome capacity(const Desk& d, const DeskRun& full, double full_secs) {
    const auto t0 = Clock::now();
    const DeskRun no_ssm = desk_train(d, Variant::no_ssm);
    const DeskRun no_mlm = desk_train(d, Variant::no_mlm);
    const double secs = full_secs + seconds_since(t0);
    const double dev = full.result.state.best_dev_accuracy;
    const bool ok = full.max_train_accuracy == 1.0 && dev >= 0.9 && no_ssm.max_train_accuracy == 1.0 &&
                    no_mlm.max_train_accuracy == 1.0 && secs < 600.0;
    return {ok, fmt("train acc HNN %.3f, -SSM %.3f, -MLM %.3f; HNN dev %.3f", full.max_train_accuracy,
                    no_ssm.max_train_accuracy, no_mlm.max_train_accuracy, dev) +
                    fmt("; %.0f s", secs)};
}

Outcome formulation_comparison(const Desk& d, const DeskRun& full) {
    const auto cmp = compare_formulations(full.result.selected, d.vocab, d.splits.dev, d.splits.test);
    const std::string table = to_markdown(cmp);
    const bool shaped = table.find("| Ranking |") != std::string::npos &&
                        table.find("| Classification |") != std::string::npos;
    std::printf("%s", table.c_str());
    return {shaped && cmp.ranking.accuracy >= cmp.classification.accuracy,
            fmt("ranking %.3f vs classification %.3f on test", cmp.ranking.accuracy, cmp.classification.accuracy)};
}

Outcome ensemble_fixture() {
    const auto out = ensemble_vote(oracle::vote_history(), 6);
    const auto& cases = oracle::vote_fixture();
    std::size_t wrong = out.size() == cases.size() ? 0 : cases.size();
    for (std::size_t i = 0; i < out.size() && i < cases.size(); ++i) {
        wrong += out[i].id == cases[i].id && out[i].predicted == cases[i].expected ? 0 : 1;
    }
    return {wrong == 0, fmt("%.0f of 20 votes differ from the hand-computed fixture", double(wrong))};
}

std::string run_fingerprint(const Desk& d, const DeskRun& run) {
    std::string s = serialize_checkpoint(run.result.selected.parameters());
    if (run.result.swa) s += serialize_checkpoint(run.result.swa->parameters());
    for (const auto& m : run.metrics) s += m;
    s += to_json(eval_ranking(run.result.selected, d.vocab, d.splits.test)).dump();
    s += to_json(eval_classification(run.result.selected, d.vocab, d.splits.dev, d.splits.test)).dump();
    return s;
}

Outcome determinism(const Desk& d, const DeskRun& first) {
    const DeskRun second = desk_train(d, Variant::full);
    const bool same = run_fingerprint(d, first) == run_fingerprint(d, second);
    return {same, same ? "checkpoints, SWA weights, metrics and reports identical"
                       : "second run differs from the first"};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int n, const char* name, const std::function<Outcome()>& check) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str());
        std::fflush(stdout);
    };

    report(1, "gradient fidelity", gradient_fidelity);
    report(2, "masked-LM score oracle", mlm_oracle);
    report(3, "similarity score oracle", ssm_oracle);
    report(4, "rank loss anchors", rank_anchors);
    report(5, "converter golden", converter_golden);
    report(6, "LCS brute force", lcs_oracle);

    Desk desk;
    DeskRun full;
    double full_secs = 0.0;
    bool desk_ok = true;
    try {
        desk = desk_setup();
        const auto t0 = Clock::now();
        full = desk_train(desk, Variant::full);
        full_secs = seconds_since(t0);
    } catch (const std::exception& e) {
        desk_ok = false;
        std::printf("desk training threw: %s\n", e.what());
    }
    auto needs_desk = [&](const std::function<Outcome()>& f) {
        return [&, f]() -> Outcome { return desk_ok ? f() : Outcome{false, "desk training failed"}; };
    };
    report(7, "end-to-end capacity", needs_desk([&] { return capacity(desk, full, full_secs); }));
    report(8, "ranking vs classification", needs_desk([&] { return formulation_comparison(desk, full); }));
    report(9, "ensemble vote fixture", ensemble_fixture);
    report(10, "determinism", needs_desk([&] { return determinism(desk, full); }));

    std::printf("%d of 10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
