// trialsent: command-line front end for the sentiment pipeline.

#include <csignal>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "trialsent/annotation.hpp"
#include "trialsent/error.hpp"
#include "trialsent/pipeline.hpp"

namespace fs = std::filesystem;
using namespace trialsent;

namespace {

struct Globals {
    std::optional<fs::path> config;
    std::optional<fs::path> run_dir;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

/// An explicit path, else the named artifact inside --run-dir.
fs::path pick(const std::optional<fs::path>& explicit_path, const Globals& g, const char* artifact_name,
              const std::string& flag) {
    if (explicit_path) return *explicit_path;
    if (g.run_dir) return *g.run_dir / artifact_name;
    throw ConfigError("missing " + flag + " (or --run-dir to use the run directory's " + artifact_name + ")");
}

pipeline::RunConfig run_config(const Globals& g) {
    auto config = g.config ? pipeline::RunConfig::load(*g.config) : pipeline::RunConfig::from_json(Json::object());
    if (g.seed) config.override_seed(*g.seed);
    return config;
}

annotation::AnnotationServer* active_server = nullptr;

void handle_signal(int) {
    if (active_server) active_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Clinical-trial conclusion sentiment: fetch, label, train, evaluate"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "Run configuration (JSON); serve takes the service configuration");
    app.add_option("--run-dir", g.run_dir, "Run directory holding stage artifacts");
    app.add_option("--seed", g.seed, "Seed for every stochastic stage (overrides the config)");
    app.add_flag("--verbose,-v", g.verbose, "Debug logging");

    // fetch
    auto* fetch = app.add_subcommand("fetch", "Harvest clinical-trial abstracts for a field");
    std::optional<std::string> field;
    std::optional<std::size_t> max_records;
    std::optional<int> from_year, to_year;
    std::optional<std::string> api_key_env;
    std::optional<fs::path> fetch_out, fixtures, record_dir;
    fetch->add_option("--field", field, "Journal subject field, e.g. Anesthesiology");
    fetch->add_option("--max", max_records, "Maximum number of records");
    fetch->add_option("--from-year", from_year);
    fetch->add_option("--to-year", to_year);
    fetch->add_option("--api-key-env", api_key_env, "Environment variable holding the API key");
    fetch->add_option("--fixtures", fixtures, "Replay recorded responses from this directory instead of the network");
    fetch->add_option("--record", record_dir, "Record every response into this directory");
    fetch->add_option("--out", fetch_out, "Corpus JSONL");

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "Extract conclusions and tokenize");
    std::optional<fs::path> pre_in, pre_vocab, pre_out;
    std::optional<std::size_t> max_len;
    pre->add_option("--in", pre_in, "Corpus JSONL");
    pre->add_option("--vocab", pre_vocab, "Vocabulary, one token per line");
    pre->add_option("--max-len", max_len, "Sequence length including start and separator tokens");
    pre->add_option("--out", pre_out, "Tokenized JSONL");

    // labels aggregate
    auto* labels = app.add_subcommand("labels", "Rater label operations");
    labels->require_subcommand(1);
    auto* aggregate = labels->add_subcommand("aggregate", "Majority vote over the three gold raters");
    std::optional<fs::path> ann_in, gold_out, adjudication_out, held_out_out;
    std::vector<std::string> gold_raters;
    aggregate->add_option("--in", ann_in, "Annotations JSONL");
    aggregate->add_option("--gold-raters", gold_raters, "The three gold-panel rater ids")->delimiter(',');
    aggregate->add_option("--out", gold_out, "Gold labels JSONL");
    aggregate->add_option("--adjudication", adjudication_out, "Unresolved ties JSONL");
    aggregate->add_option("--held-out", held_out_out, "Annotations of raters outside the gold panel");

    // corpus balance / split
    auto* corpus_cmd = app.add_subcommand("corpus", "Labeled-set operations");
    corpus_cmd->require_subcommand(1);
    auto* balance = corpus_cmd->add_subcommand("balance", "Resample every class to the median class size");
    std::optional<fs::path> bal_tokens, bal_gold, bal_out;
    balance->add_option("--tokens", bal_tokens, "Tokenized JSONL");
    balance->add_option("--gold", bal_gold, "Gold labels JSONL");
    balance->add_option("--out", bal_out, "Balanced labeled JSONL");
    auto* split = corpus_cmd->add_subcommand("split", "Stratified hold-out plus unlabeled pool");
    std::optional<fs::path> split_in, split_tokens, split_train, split_val;
    std::optional<double> holdout;
    split->add_option("--in", split_in, "Balanced labeled JSONL");
    split->add_option("--tokens", split_tokens, "Tokenized JSONL supplying the unlabeled pool");
    split->add_option("--holdout", holdout, "Validation fraction");
    split->add_option("--train-out", split_train, "Training corpus JSONL");
    split->add_option("--validation-out", split_val, "Validation JSONL");

    // train
    auto* train = app.add_subcommand("train", "Adversarial fine-tuning");
    std::optional<fs::path> train_corpus, train_val, train_out;
    bool no_validation = false;
    train->add_option("--corpus", train_corpus, "Training corpus JSONL (labeled + UNK_UNK rows)");
    train->add_option("--validation", train_val, "Validation JSONL tracked per epoch");
    train->add_flag("--no-validation", no_validation, "Skip per-epoch validation");
    train->add_option("--out", train_out, "Model directory");

    // classify
    auto* classify = app.add_subcommand("classify", "Label tokenized abstracts with a trained model");
    std::optional<fs::path> cls_model, cls_in, cls_out;
    classify->add_option("--model", cls_model, "Model directory");
    classify->add_option("--in", cls_in, "Tokenized JSONL");
    classify->add_option("--out", cls_out, "Predictions JSONL");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions or a held-out rater against gold");
    std::optional<fs::path> ev_pred, ev_gold, ev_rater, ev_rater_gold, ev_out, ev_table;
    evaluate->add_option("--pred", ev_pred, "Predictions JSONL");
    evaluate->add_option("--gold", ev_gold, "Gold labels or labeled tokenized JSONL");
    evaluate->add_option("--rater", ev_rater, "Held-out rater annotations JSONL");
    evaluate->add_option("--rater-gold", ev_rater_gold, "Gold labels for the rater comparison (default --gold)");
    evaluate->add_option("--out", ev_out, "Report JSON");
    evaluate->add_option("--table", ev_table, "Plain-text report");

    // trend
    auto* trend = app.add_subcommand("trend", "Sentiment fractions per year or field");
    std::optional<fs::path> tr_pred, tr_records, tr_out;
    std::string group_by = "year";
    trend->add_option("--pred", tr_pred, "Predictions JSONL");
    trend->add_option("--records", tr_records, "Corpus JSONL");
    trend->add_option("--group-by", group_by, "year or field");
    trend->add_option("--out", tr_out, "CSV output");

    // run
    auto* run = app.add_subcommand("run", "Run several stages against --run-dir");
    std::vector<std::string> stages;
    run->add_option("--stages", stages, "Comma-separated stages")->delimiter(',')->required();

    // serve
    auto* serve = app.add_subcommand("serve", "Start the annotation service");
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--host", host);
    serve->add_option("--port", port);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);
    spdlog::set_pattern("[%l] %v");

    try {
        if (*fetch) {
            pipeline::FetchSettings settings;
            if (g.config) settings = run_config(g).fetch;
            if (field) settings.field = *field;
            if (max_records) settings.max_records = *max_records;
            if (from_year) settings.from_year = from_year;
            if (to_year) settings.to_year = to_year;
            if (api_key_env) settings.api_key_env = *api_key_env;
            if (fixtures) settings.fixtures = fixtures;
            if (settings.from_year.has_value() != settings.to_year.has_value())
                throw ConfigError("--from-year and --to-year must be given together");
            auto transport = pipeline::make_transport(settings);
            ingest::EntrezOptions options;
            if (settings.fixtures) options.requests_per_second = 1000;
            const auto out = pick(fetch_out, g, pipeline::artifact::kRecords, "--out");
            if (record_dir) {
                ingest::RecordingTransport recorder(*transport, *record_dir);
                pipeline::fetch_stage(settings, recorder, out, options);
            } else {
                pipeline::fetch_stage(settings, *transport, out, options);
            }
        } else if (*pre) {
            auto settings = run_config(g).preprocess;
            if (pre_vocab) settings.vocab = pre_vocab;
            if (max_len) settings.max_length = *max_len;
            if (!settings.vocab) throw ConfigError("missing --vocab (or config.preprocess.vocab)");
            pipeline::preprocess_stage(pick(pre_in, g, pipeline::artifact::kRecords, "--in"), *settings.vocab,
                                       settings.max_length, settings.conclusion,
                                       pick(pre_out, g, pipeline::artifact::kTokens, "--out"));
        } else if (*aggregate) {
            auto settings = run_config(g).labels;
            if (ann_in) settings.annotations = ann_in;
            if (!gold_raters.empty()) settings.gold_raters = {gold_raters.begin(), gold_raters.end()};
            if (!settings.annotations) throw ConfigError("missing --in (or config.labels.annotations)");
            const auto gold = pick(gold_out, g, pipeline::artifact::kGold, "--out");
            auto beside = [&](const std::optional<fs::path>& p, const char* name) {
                return p ? *p : g.run_dir ? *g.run_dir / name : gold.parent_path() / name;
            };
            pipeline::aggregate_stage(*settings.annotations, settings.gold_raters, gold,
                                      beside(adjudication_out, pipeline::artifact::kAdjudication),
                                      beside(held_out_out, pipeline::artifact::kHeldOut));
        } else if (*balance) {
            const auto config = run_config(g);
            pipeline::balance_stage(pick(bal_tokens, g, pipeline::artifact::kTokens, "--tokens"),
                                    pick(bal_gold, g, pipeline::artifact::kGold, "--gold"), config.seed,
                                    pick(bal_out, g, pipeline::artifact::kBalanced, "--out"));
        } else if (*split) {
            const auto config = run_config(g);
            pipeline::split_stage(pick(split_in, g, pipeline::artifact::kBalanced, "--in"),
                                  pick(split_tokens, g, pipeline::artifact::kTokens, "--tokens"),
                                  holdout.value_or(config.holdout), config.seed,
                                  pick(split_train, g, pipeline::artifact::kTrain, "--train-out"),
                                  pick(split_val, g, pipeline::artifact::kValidation, "--validation-out"));
        } else if (*train) {
            const auto config = run_config(g);
            std::optional<fs::path> validation = train_val;
            if (!validation && g.run_dir && !no_validation && fs::exists(*g.run_dir / pipeline::artifact::kValidation))
                validation = *g.run_dir / pipeline::artifact::kValidation;
            if (no_validation) validation.reset();
            pipeline::train_stage(pick(train_corpus, g, pipeline::artifact::kTrain, "--corpus"), validation,
                                  config.encoder, config.gan, pick(train_out, g, pipeline::artifact::kModel, "--out"));
        } else if (*classify) {
            pipeline::classify_stage(pick(cls_model, g, pipeline::artifact::kModel, "--model"),
                                     pick(cls_in, g, pipeline::artifact::kTokens, "--in"),
                                     pick(cls_out, g, pipeline::artifact::kPredictions, "--out"));
        } else if (*evaluate) {
            std::optional<fs::path> pred = ev_pred;
            if (!pred && !ev_rater && g.run_dir) pred = *g.run_dir / pipeline::artifact::kValidationPredictions;
            const auto gold = pick(ev_gold, g, pipeline::artifact::kValidation, "--gold");
            const auto out = ev_out ? *ev_out
                                    : (g.run_dir ? *g.run_dir / pipeline::artifact::kReport : fs::path("report.json"));
            const auto doc = pipeline::evaluate_stage(pred, gold, ev_rater, ev_rater_gold, out, ev_table);
            std::cout << doc.dump(2) << "\n";
        } else if (*trend) {
            pipeline::trend_stage(pick(tr_pred, g, pipeline::artifact::kPredictions, "--pred"),
                                  pick(tr_records, g, pipeline::artifact::kRecords, "--records"),
                                  pipeline::parse_group_by(group_by),
                                  pick(tr_out, g, pipeline::artifact::kTrend, "--out"));
        } else if (*run) {
            if (!g.run_dir) throw ConfigError("run needs --run-dir");
            std::vector<pipeline::Stage> parsed;
            for (const auto& s : stages) parsed.push_back(pipeline::parse_stage(s));
            pipeline::run_pipeline(run_config(g), *g.run_dir, parsed);
        } else if (*serve) {
            if (!g.config) throw ConfigError("serve needs --config pointing at the service configuration");
            const auto config =
                annotation::ServiceConfig::from_json(read_json(*g.config), g.config->parent_path());
            if (!fs::exists(config.corpus)) throw InputError("corpus " + config.corpus.string() + " does not exist");
            std::vector<std::string> ids;
            for (const auto& r : config.raters) ids.push_back(r.id);
            annotation::AnnotationStore store(ingest::read_corpus(config.corpus), ids, g.seed.value_or(config.seed),
                                              config.event_log);
            annotation::AnnotationServer server(store, config);
            active_server = &server;
            std::signal(SIGINT, handle_signal);
            std::signal(SIGTERM, handle_signal);
            server.listen(host, port);
            active_server = nullptr;
        }
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    return 0;
}
