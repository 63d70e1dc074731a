#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hnn/hnn.hpp"

namespace hnn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
    std::string text;
    for (const auto& r : rows) text += r.dump() + "\n";
    write_text(path, text);
}

std::vector<Instance> read_corpus(const fs::path& path) { return read_instances(path).instances; }

std::vector<InstancePrediction> read_predictions(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    std::vector<InstancePrediction> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(prediction_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const DataError& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<json> prediction_rows(const std::vector<InstancePrediction>& preds) {
    std::vector<json> rows;
    for (const auto& p : preds) rows.push_back(to_json(p));
    return rows;
}

struct Common {
    std::optional<std::uint64_t> seed;
    std::string config;
    bool verbose = false;
};

void add_common(CLI::App* sub, Common& c, bool with_seed, bool with_config, const std::string& config_help = "") {
    if (with_seed) sub->add_option("--seed", c.seed, "Random seed (overrides the config file)");
    if (with_config) sub->add_option("--config", c.config, config_help)->check(CLI::ExistingFile);
    sub->add_flag("--verbose", c.verbose, "Progress on the error stream");
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    Common common;
    std::size_t size = 200;
    std::size_t dev_size = 0;
    std::size_t test_size = 0;
    std::string out, dev_out, test_out;
};

int cmd_synth(const SynthArgs& a, std::ostream& err) {
    SyntheticTemplates t;
    if (!a.common.config.empty()) t = templates_from_json(read_json_file(a.common.config));
    if (a.dev_size > 0 && a.dev_out.empty()) throw ConfigError("--dev-size needs --dev-out");
    if (a.test_size > 0 && a.test_out.empty()) throw ConfigError("--test-size needs --test-out");
    const auto splits = build_synthetic_splits(t, a.common.seed.value_or(0), a.size, a.dev_size, a.test_size);
    write_instances(a.out, splits.train);
    if (a.dev_size > 0) write_instances(a.dev_out, splits.dev);
    if (a.test_size > 0) write_instances(a.test_out, splits.test);
    if (a.common.verbose) {
        err << "synth: " << splits.train.size() << " train, " << splits.dev.size() << " dev, " << splits.test.size()
            << " test instances\n";
    }
    return kOk;
}

struct ConvertArgs {
    Common common;
    std::string input, output, report;
};

int cmd_convert(const ConvertArgs& a, std::ostream& err) {
    ConversionReport report;
    const auto instances = convert_corpus(read_nli_tsv(a.input), report);
    write_instances(a.output, instances);
    if (!a.report.empty()) write_json(a.report, report.to_json());
    if (a.common.verbose) {
        err << "convert: " << report.pairs << " pairs, " << report.extracted << " extracted, " << report.instances
            << " instances\n";
    }
    return kOk;
}

struct TrainArgs {
    Common common;
    std::string train, dev, out;
    std::optional<std::size_t> epochs, batch_size, warmup;
    std::optional<double> lr;
};

RunConfig resolve_train_config(const TrainArgs& a) {
    RunConfig cfg;
    if (!a.common.config.empty()) merge_json(read_json_file(a.common.config), cfg);
    if (a.common.seed) cfg.seed = *a.common.seed;
    if (a.epochs) cfg.train.max_epochs = *a.epochs;
    if (a.batch_size) cfg.train.batch_size = *a.batch_size;
    if (a.warmup) cfg.train.warmup_steps = *a.warmup;
    if (a.lr) cfg.train.learning_rate = *a.lr;
    cfg.validate();
    return cfg;
}

int cmd_train(const TrainArgs& a, std::ostream& err) {
    RunConfig cfg = resolve_train_config(a);
    const auto train_set = read_corpus(a.train);
    const auto dev_set = a.dev.empty() ? std::vector<Instance>{} : read_corpus(a.dev);
    const Vocab vocab = corpus_vocab({&train_set, &dev_set});
    cfg.encoder.vocab_size = vocab.size();

    const fs::path out = a.out;
    fs::create_directories(out);
    write_json(out / "config.json", to_json(cfg));
    vocab.save(out / "vocab.txt");

    std::vector<json> metrics, steps;
    TrainHooks hooks;
    hooks.on_step = [&](const StepRecord& r) { steps.push_back(to_json(r)); };
    hooks.on_epoch = [&](const EpochRecord& r, const HnnModel& m) {
        const std::string tag = "epoch-" + std::to_string(r.epoch);
        save_checkpoint(out / tag / "model.bin", m.parameters());
        write_jsonl(out / "predictions" / (tag + ".jsonl"), prediction_rows(r.dev_predictions));
        metrics.push_back(metrics_json(r));
        if (a.common.verbose) err << "train: " << metrics.back().dump() << "\n";
    };
    const auto result = train(make_model(cfg, vocab), vocab, train_set, dev_set, cfg.resolved_train(), hooks);
    for (const auto& w : result.warnings) err << "warning: " << w << "\n";

    write_jsonl(out / "metrics.jsonl", metrics);
    write_jsonl(out / "train_log.jsonl", steps);
    save_checkpoint(out / "model.bin", result.selected.parameters());
    if (result.swa) save_checkpoint(out / "swa.bin", result.swa->parameters());
    write_json(out / "summary.json", {{"selected_epoch", result.state.best_epoch},
                                      {"best_dev_accuracy", result.state.best_dev_accuracy},
                                      {"steps", result.state.step},
                                      {"swa_snapshots", result.state.swa.count()},
                                      {"warnings", result.warnings}});
    return kOk;
}

struct ScoreArgs {
    Common common;
    std::string ckpt, weights = "model.bin", data, out;
};

int cmd_score(const ScoreArgs& a, std::ostream&) {
    const auto lm = load_model(a.ckpt, a.weights);
    const auto data = read_corpus(a.data);
    std::vector<json> rows;
    for (const auto& inst : data) {
        for (std::size_t c = 0; c < inst.candidates.size(); ++c) {
            const auto s = score_instance(lm.model, lm.vocab, inst, c);
            rows.push_back({{"instance_id", inst.id},
                            {"candidate_index", c},
                            {"p_mlm", s.p_mlm ? json(*s.p_mlm) : json(nullptr)},
                            {"p_ssm", s.p_ssm ? json(*s.p_ssm) : json(nullptr)},
                            {"score", s.combined}});
        }
    }
    write_jsonl(a.out, rows);
    return kOk;
}

struct EvalArgs {
    Common common;
    std::string ckpt, weights = "model.bin", data, formulation = "ranking", dev, out;
};

int cmd_eval(const EvalArgs& a, std::ostream& err) {
    const Formulation f = parse_formulation(a.formulation);
    if (f == Formulation::classification && a.dev.empty()) {
        throw ConfigError("classification needs --dev to fit the threshold");
    }
    const auto lm = load_model(a.ckpt, a.weights);
    const auto data = read_corpus(a.data);
    EvalReport report = f == Formulation::ranking
                            ? eval_ranking(lm.model, lm.vocab, data)
                            : eval_classification(lm.model, lm.vocab, read_corpus(a.dev), data);
    for (const auto& w : report.warnings) err << "warning: " << w << "\n";
    if (report.skipped > 0) err << "warning: " << report.skipped << " instances without a usable label skipped\n";
    write_json(a.out, to_json(report));
    if (a.common.verbose) err << "eval: " << to_string(f) << " accuracy " << report.accuracy << "\n";
    return kOk;
}

struct EnsembleArgs {
    Common common;
    std::string pred_dir, out;
    std::size_t window = 6;
};

int cmd_ensemble(const EnsembleArgs& a, std::ostream& err) {
    fs::path dir = a.pred_dir;
    if (fs::is_directory(dir / "predictions")) dir /= "predictions";
    if (!fs::is_directory(dir)) throw DataError("prediction directory " + dir.string() + " does not exist");
    const std::regex pattern(R"(epoch-(\d+)\.jsonl)");
    std::vector<std::pair<std::size_t, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, m, pattern)) files.emplace_back(std::stoul(m[1].str()), entry.path());
    }
    if (files.empty()) throw DataError("no epoch-N.jsonl prediction files in " + dir.string());
    std::sort(files.begin(), files.end());
    std::vector<std::vector<InstancePrediction>> history;
    for (const auto& [_, path] : files) history.push_back(read_predictions(path));
    const auto final_preds = ensemble_vote(history, a.window);
    write_jsonl(a.out, prediction_rows(final_preds));
    if (a.common.verbose) {
        err << "ensemble: " << std::min(a.window, history.size()) << " of " << history.size()
            << " epochs, accuracy " << ranking_accuracy(final_preds) << "\n";
    }
    return kOk;
}

struct GradcheckArgs {
    Common common;
    std::string out;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& err) {
    GradcheckConfig cfg;
    if (!a.common.config.empty()) merge_json(read_json_file(a.common.config), cfg);
    if (a.common.seed) cfg.seed = *a.common.seed;
    const auto r = run_gradcheck(cfg);
    if (!a.out.empty()) write_json(a.out, to_json(r));
    err << "gradcheck: " << r.n_checked << " entries, " << r.n_failed << " failed, max rel err " << r.max_rel_err
        << " (" << r.worst.parameter << "[" << r.worst.index << "])\n";
    return r.passed() ? kOk : kDataError;
}

struct AblateArgs {
    Common common;
    std::string train, dev, name = "synthetic", out, markdown;
};

int cmd_ablate(const AblateArgs& a, std::ostream& err) {
    RunConfig cfg;
    if (!a.common.config.empty()) merge_json(read_json_file(a.common.config), cfg);
    if (a.common.seed) cfg.seed = *a.common.seed;
    cfg.validate();
    AblationDataset d{a.name, read_corpus(a.train), read_corpus(a.dev)};
    const auto table = ablation_matrix({d}, cfg);
    write_json(a.out, to_json(table));
    if (!a.markdown.empty()) write_text(a.markdown, to_markdown(table));
    if (a.common.verbose) err << to_markdown(table);
    return kOk;
}

}  // namespace

LoadedModel load_model(const fs::path& ckpt, const std::string& weights) {
    if (!fs::is_directory(ckpt)) throw DataError("checkpoint directory " + ckpt.string() + " does not exist");
    RunConfig cfg;
    try {
        merge_json(read_json_file(ckpt / "config.json"), cfg);
    } catch (const ConfigError& e) {
        throw ParseError(std::string("checkpoint configuration: ") + e.what());
    }
    Vocab vocab = Vocab::load(ckpt / "vocab.txt");
    if (cfg.encoder.vocab_size != vocab.size()) {
        throw ParseError("checkpoint vocabulary has " + std::to_string(vocab.size()) + " tokens, config says " +
                         std::to_string(cfg.encoder.vocab_size));
    }
    HnnModel model = make_model(cfg, vocab);
    auto params = model.parameters();
    const fs::path w = fs::path(weights).is_absolute() || fs::exists(weights) ? fs::path(weights) : ckpt / weights;
    load_checkpoint_into(w, params);
    return {std::move(cfg), std::move(vocab), std::move(model)};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pronoun resolution with a hybrid masked-LM / semantic-similarity model", "hnn"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_version_flag("--version", "hnn 0.1.0");

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a template-based pronoun-resolution corpus");
    add_common(s, synth.common, true, true, "Template pools (JSON)");
    s->add_option("--size", synth.size, "Training instances");
    s->add_option("--dev-size", synth.dev_size, "Dev instances");
    s->add_option("--test-size", synth.test_size, "Test instances");
    s->add_option("--out", synth.out, "Training JSONL output")->required();
    s->add_option("--dev-out", synth.dev_out, "Dev JSONL output");
    s->add_option("--test-out", synth.test_out, "Test JSONL output");

    ConvertArgs conv;
    auto* c = app.add_subcommand("convert", "Convert NLI premise/hypothesis pairs to candidate instances");
    add_common(c, conv.common, false, false);
    c->add_option("--input", conv.input, "TSV with index, premise, hypothesis[, label]")
        ->required()
        ->check(CLI::ExistingFile);
    c->add_option("--output", conv.output, "Instance JSONL output")->required();
    c->add_option("--report", conv.report, "Conversion report (JSON)");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Fine-tune the model on candidate pairs");
    add_common(t, tr.common, true, true, "Run configuration (JSON)");
    t->add_option("--train", tr.train, "Training JSONL")->required()->check(CLI::ExistingFile);
    t->add_option("--dev", tr.dev, "Dev JSONL")->check(CLI::ExistingFile);
    t->add_option("--out", tr.out, "Checkpoint directory")->required();
    t->add_option("--epochs", tr.epochs, "Override train.max_epochs");
    t->add_option("--lr", tr.lr, "Override train.learning_rate");
    t->add_option("--batch-size", tr.batch_size, "Override train.batch_size");
    t->add_option("--warmup", tr.warmup, "Override train.warmup_steps");

    ScoreArgs sc;
    auto* so = app.add_subcommand("score", "Score every candidate of every instance");
    add_common(so, sc.common, false, false);
    so->add_option("--ckpt", sc.ckpt, "Checkpoint directory")->required();
    so->add_option("--weights", sc.weights, "Parameter file inside the checkpoint directory");
    so->add_option("--data", sc.data, "Instance JSONL")->required()->check(CLI::ExistingFile);
    so->add_option("--out", sc.out, "Score JSONL output")->required();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Ranking or classification accuracy");
    add_common(e, ev.common, false, false);
    e->add_option("--ckpt", ev.ckpt, "Checkpoint directory")->required();
    e->add_option("--weights", ev.weights, "Parameter file inside the checkpoint directory");
    e->add_option("--data", ev.data, "Instance JSONL")->required()->check(CLI::ExistingFile);
    e->add_option("--formulation", ev.formulation, "ranking or classification")
        ->check(CLI::IsMember({"ranking", "classification"}));
    e->add_option("--dev", ev.dev, "Dev JSONL for the classification threshold")->check(CLI::ExistingFile);
    e->add_option("--out", ev.out, "Report JSON output")->required();

    EnsembleArgs en;
    auto* n = app.add_subcommand("ensemble", "Majority vote over recorded epoch predictions");
    add_common(n, en.common, false, false);
    n->add_option("--pred-dir", en.pred_dir, "Checkpoint or predictions directory")->required();
    n->add_option("--window", en.window, "Number of most recent epochs")->check(CLI::PositiveNumber);
    n->add_option("--out", en.out, "Prediction JSONL output")->required();

    GradcheckArgs gc;
    auto* g = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
    add_common(g, gc.common, true, true, "Gradient-check configuration (JSON)");
    g->add_option("--out", gc.out, "Report JSON output");

    AblateArgs ab;
    auto* a = app.add_subcommand("ablate", "Train the full model and each ablation on one split");
    add_common(a, ab.common, true, true, "Run configuration (JSON)");
    a->add_option("--train", ab.train, "Training JSONL")->required()->check(CLI::ExistingFile);
    a->add_option("--dev", ab.dev, "Dev JSONL")->required()->check(CLI::ExistingFile);
    a->add_option("--name", ab.name, "Dataset column name");
    a->add_option("--out", ab.out, "Table JSON output")->required();
    a->add_option("--markdown", ab.markdown, "Table markdown output");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::CallForVersion& v) {
        out << v.what() << "\n";
        return kOk;
    } catch (const CLI::ParseError& pe) {
        err << "error: " << pe.what() << "\n";
        const CLI::App* where = &app;
        for (const auto* sub : app.get_subcommands()) where = sub;
        err << where->help();
        return kConfigError;
    }

    try {
        if (s->parsed()) return cmd_synth(synth, err);
        if (c->parsed()) return cmd_convert(conv, err);
        if (t->parsed()) return cmd_train(tr, err);
        if (so->parsed()) return cmd_score(sc, err);
        if (e->parsed()) return cmd_eval(ev, err);
        if (n->parsed()) return cmd_ensemble(en, err);
        if (g->parsed()) return cmd_gradcheck(gc, err);
        if (a->parsed()) return cmd_ablate(ab, err);
    } catch (const ConfigError& ex) {
        err << "configuration error: " << ex.what() << "\n";
        return kConfigError;
    } catch (const Error& ex) {
        err << "error: " << ex.what() << "\n";
        return kDataError;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return kDataError;
    }
    err << app.help();
    return kConfigError;
}

}  // namespace hnn::cli
