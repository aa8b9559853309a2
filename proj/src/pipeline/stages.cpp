#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "trialsent/error.hpp"
#include "trialsent/pipeline.hpp"

namespace trialsent::pipeline {

namespace fs = std::filesystem;

namespace {

std::string sha256_path(const fs::path& path) {
    if (fs::is_regular_file(path)) return sha256_file(path);
    if (!fs::is_directory(path)) return {};
    std::vector<std::string> lines;
    for (const auto& entry : fs::recursive_directory_iterator(path))
        if (entry.is_regular_file())
            lines.push_back(fs::relative(entry.path(), path).generic_string() + " " + sha256_file(entry.path()));
    std::sort(lines.begin(), lines.end());
    std::string joined;
    for (const auto& l : lines) joined += l + "\n";
    return sha256_hex(joined);
}

fs::path meta_path(const fs::path& output) {
    auto p = output;
    if (!p.has_filename()) p = p.parent_path();
    return p.parent_path() / (p.filename().string() + ".meta.json");
}

std::vector<std::pair<std::string, SentimentLabel>> gold_pairs(const fs::path& path) {
    std::vector<std::pair<std::string, SentimentLabel>> out;
    for (const auto& row : read_jsonl(path)) {
        if (!row.contains("pmid") || !row.contains("label")) throw InputError(path.string() + ": rows need pmid and label");
        if (row["label"].is_null()) continue;
        const auto label = parse_label(row["label"].get<std::string>());
        if (is_real(label)) out.emplace_back(row["pmid"].get<std::string>(), label);
    }
    if (out.empty()) throw InputError(path.string() + " has no labeled rows");
    return out;
}

}  // namespace

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void require_artifact(const fs::path& path, const std::string& producing_stage) {
    if (!fs::exists(path))
        throw MissingArtifactError(path.string() + " does not exist; run " + producing_stage + " first");
}

void write_stage_metadata(const fs::path& output, const std::string& stage, std::uint64_t seed,
                          const std::vector<fs::path>& inputs, const std::string& started_at) {
    Json in = Json::object();
    for (const auto& p : inputs) in[p.string()] = sha256_path(p);
    write_json(meta_path(output), Json{{"stage", stage},
                                       {"seed", seed},
                                       {"inputs", in},
                                       {"output", output.string()},
                                       {"output_sha256", sha256_path(output)},
                                       {"started_at", started_at},
                                       {"finished_at", utc_timestamp()}});
}

std::unique_ptr<ingest::HttpTransport> make_transport(const FetchSettings& settings) {
    if (settings.fixtures) return std::make_unique<ingest::ReplayTransport>(*settings.fixtures);
    return std::make_unique<ingest::EutilsHttpTransport>();
}

void fetch_stage(const FetchSettings& settings, ingest::HttpTransport& transport, const fs::path& out,
                 const ingest::EntrezOptions& options) {
    const auto started = utc_timestamp();
    if (settings.field.empty()) throw ConfigError("fetch: field is required");
    ingest::FieldQuery query;
    query.field_name = settings.field;
    query.max_records = settings.max_records;
    if (settings.from_year && settings.to_year) query.date_range = ingest::YearRange{*settings.from_year, *settings.to_year};
    try {
        query.validate();
    } catch (const InputError& e) {
        throw ConfigError(std::string("fetch: ") + e.what());
    }
    auto opts = options;
    if (!opts.api_key && !settings.api_key_env.empty())
        if (const char* key = std::getenv(settings.api_key_env.c_str()); key && *key) opts.api_key = key;
    ingest::EntrezClient client(transport, opts);
    const auto records = ingest::harvest(client, query, ingest::HeadingLexicon::defaults());
    ingest::write_corpus(out, records);
    spdlog::info("fetch: {} records for field '{}' -> {}", records.size(), settings.field, out.string());
    write_stage_metadata(out, "fetch", 0, {}, started);
}

preprocess::PreprocessStats preprocess_stage(const fs::path& records, const fs::path& vocab, std::size_t max_length,
                                             const preprocess::ConclusionOptions& options, const fs::path& out) {
    const auto started = utc_timestamp();
    require_artifact(records, "fetch");
    if (!fs::exists(vocab)) throw ConfigError("vocabulary " + vocab.string() + " does not exist");
    const auto corpus = ingest::read_corpus(records);
    const auto vocabulary = preprocess::Vocabulary::load(vocab);
    preprocess::PreprocessStats stats;
    const auto examples = preprocess::preprocess_corpus(corpus, vocabulary, max_length, {}, options, &stats);
    write_examples(out, examples);
    spdlog::info("preprocess: {} records ({} structured, {} trailing-fraction, {} truncated) -> {}", stats.records,
                 stats.structured, stats.trailing, stats.truncated, out.string());
    write_stage_metadata(out, "preprocess", 0, {records, vocab}, started);
    return stats;
}

corpus::Aggregation aggregate_stage(const fs::path& annotations, const std::set<std::string>& gold_raters,
                                    const fs::path& out_gold, const fs::path& out_adjudication,
                                    const fs::path& out_held_out) {
    const auto started = utc_timestamp();
    if (!fs::exists(annotations)) throw InputError("annotations file " + annotations.string() + " does not exist");
    if (gold_raters.size() != 3) throw ConfigError("labels aggregate: exactly three gold raters are required");
    auto result = corpus::aggregate(corpus::read_annotations(annotations), gold_raters);
    corpus::write_gold(out_gold, result.gold);
    corpus::write_gold(out_adjudication, result.unresolved);
    corpus::write_annotations(out_held_out, result.held_out);
    for (const auto& g : result.unresolved) spdlog::warn("labels: pmid {} is a three-way tie, queued for adjudication", g.pmid);
    spdlog::info("labels: {} abstracts, {} resolved, {} unresolved, {} held-out ratings", result.gold.size(),
                 result.gold.size() - result.unresolved.size(), result.unresolved.size(), result.held_out.size());
    for (const auto& out : {out_gold, out_adjudication, out_held_out})
        write_stage_metadata(out, "labels aggregate", 0, {annotations}, started);
    return result;
}

std::vector<Example> balance_stage(const fs::path& tokens, const fs::path& gold, std::uint64_t seed,
                                   const fs::path& out) {
    const auto started = utc_timestamp();
    require_artifact(tokens, "preprocess");
    require_artifact(gold, "labels aggregate");
    const auto labels = corpus::read_label_map(gold);
    std::vector<Example> labeled;
    for (auto ex : read_examples(tokens)) {
        const auto it = labels.find(ex.pmid);
        if (it == labels.end()) continue;
        ex.label = it->second;
        labeled.push_back(std::move(ex));
    }
    if (labeled.empty()) throw InputError("corpus balance: no tokenized row has a gold label");
    const auto before = corpus::class_counts(labeled);
    auto balanced = corpus::balance_classes(labeled, seed);
    const auto after = corpus::class_counts(balanced);
    spdlog::info("balance: {}/{}/{} -> {}/{}/{} (POS/NEG/NEU)", before[0], before[1], before[2], after[0], after[1],
                 after[2]);
    write_examples(out, balanced);
    write_stage_metadata(out, "corpus balance", seed, {tokens, gold}, started);
    return balanced;
}

corpus::DatasetSplit split_stage(const fs::path& balanced, const fs::path& tokens, double holdout, std::uint64_t seed,
                                 const fs::path& out_train, const fs::path& out_validation) {
    const auto started = utc_timestamp();
    require_artifact(balanced, "corpus balance");
    require_artifact(tokens, "preprocess");
    const auto labeled = read_examples(balanced);
    auto result = corpus::split(labeled, holdout, seed);

    std::unordered_set<std::string> labeled_pmids;
    for (const auto& ex : labeled) labeled_pmids.insert(ex.pmid);
    std::vector<Example> unlabeled;
    for (auto ex : read_examples(tokens))
        if (!labeled_pmids.count(ex.pmid)) unlabeled.push_back(std::move(ex));
    const auto training = corpus::assemble_training_corpus(result.train, unlabeled);
    write_examples(out_train, training.rows());
    write_examples(out_validation, result.validation);
    spdlog::info("split: {} train labeled, {} validation, {} unlabeled", result.train.size(), result.validation.size(),
                 training.unlabeled.size());
    write_stage_metadata(out_train, "corpus split", seed, {balanced, tokens}, started);
    write_stage_metadata(out_validation, "corpus split", seed, {balanced, tokens}, started);
    return result;
}

ssgan::TrainedModel train_stage(const fs::path& train, const std::optional<fs::path>& validation,
                                const encoder::EncoderConfig& encoder_config, const ssgan::GanConfig& gan,
                                const fs::path& out_model) {
    const auto started = utc_timestamp();
    require_artifact(train, "preprocess");
    const auto rows = read_examples(train);
    const auto corpus = corpus::TrainingCorpus::from_rows(rows);
    std::vector<Example> val;
    std::vector<fs::path> inputs{train};
    if (validation) {
        require_artifact(*validation, "corpus split");
        val = read_examples(*validation);
        inputs.push_back(*validation);
    }
    if (encoder_config.kind == encoder::EncoderKind::TinyTest)
        for (const auto& ex : rows)
            for (auto id : ex.tokens.ids)
                if (id < 0 || static_cast<std::size_t>(id) >= encoder_config.vocab_size)
                    throw ConfigError("encoder.vocab_size = " + std::to_string(encoder_config.vocab_size) +
                                      " but the corpus uses token id " + std::to_string(id));
    spdlog::info("train: {} labeled, {} unlabeled, {} validation, {} epochs", corpus.labeled.size(),
                 corpus.unlabeled.size(), val.size(), gan.epochs);
    ssgan::TrainHooks hooks;
    hooks.on_epoch = [](const ssgan::EpochRecord& r) {
        spdlog::info("epoch {}: L_D={:.6f} L_G={:.6f} train_acc={} val_acc={}", r.epoch, r.losses.d_total,
                     r.losses.g_total, r.train_accuracy ? std::to_string(*r.train_accuracy) : "-",
                     r.validation ? std::to_string(r.validation->accuracy) : "-");
    };
    auto model = ssgan::train(corpus, encoder::load(encoder_config), gan, validation ? &val : nullptr, hooks);
    model.save(out_model, Json{{"stage", "train"},
                               {"seed", gan.seed},
                               {"train_sha256", sha256_file(train)},
                               {"encoder", encoder_config.to_json()}});
    write_stage_metadata(out_model, "train", gan.seed, inputs, started);
    return model;
}

std::vector<eval::Prediction> classify_stage(const fs::path& model_dir, const fs::path& tokens, const fs::path& out) {
    const auto started = utc_timestamp();
    require_artifact(model_dir, "train");
    require_artifact(tokens, "preprocess");
    const auto model = ssgan::TrainedModel::load(model_dir);
    const auto examples = read_examples(tokens);
    std::vector<TokenSequence> seqs;
    seqs.reserve(examples.size());
    for (const auto& ex : examples) seqs.push_back(ex.tokens);
    const auto preds = model.predict(seqs);
    std::vector<eval::Prediction> rows;
    rows.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) rows.push_back({examples[i].pmid, preds[i].label, preds[i].probs});
    eval::write_predictions(out, rows);
    spdlog::info("classify: {} predictions -> {}", rows.size(), out.string());
    write_stage_metadata(out, "classify", model.config().seed, {model_dir, tokens}, started);
    return rows;
}

Json evaluate_stage(const std::optional<fs::path>& predictions, const fs::path& gold, const std::optional<fs::path>& rater,
                    const std::optional<fs::path>& rater_gold, const fs::path& out_json,
                    const std::optional<fs::path>& out_text) {
    const auto started = utc_timestamp();
    if (!predictions && !rater) throw ConfigError("evaluate: give predictions, a rater file, or both");
    if (!fs::exists(gold)) throw InputError("gold file " + gold.string() + " does not exist");
    std::vector<eval::ComparisonRow> rows;
    std::vector<fs::path> inputs{gold};
    Json doc = Json::object();
    if (predictions) {
        require_artifact(*predictions, "classify");
        inputs.push_back(*predictions);
        const auto report = eval::evaluate_predictions(eval::read_predictions(*predictions), gold_pairs(gold));
        doc["model"] = eval::to_json(report);
        rows.push_back({"SS-GAN classifier", "3", report});
        spdlog::info("evaluate: model accuracy {:.4f}, macro F1 {:.4f} over n={}", report.accuracy, report.macro_f1,
                     report.n);
    }
    if (rater) {
        const auto rater_gold_path = rater_gold.value_or(gold);
        if (!fs::exists(*rater)) throw InputError("rater file " + rater->string() + " does not exist");
        const auto report = eval::compare_rater(corpus::read_annotations(*rater), corpus::read_gold(rater_gold_path));
        doc["rater"] = eval::to_json(report);
        rows.push_back({"Held-out expert rater", "3", report});
        spdlog::info("evaluate: rater accuracy {:.4f}, macro F1 {:.4f} over n={}", report.accuracy, report.macro_f1,
                     report.n);
        inputs.push_back(*rater);
        if (rater_gold) inputs.push_back(*rater_gold);
    }
    write_json(out_json, doc);
    if (out_text) {
        std::string text = eval::render_table(rows);
        for (const auto& r : rows) text += "\n" + r.classifier + "\n" + eval::render_matrix(r.report.matrix);
        write_text(*out_text, text);
    }
    write_stage_metadata(out_json, "evaluate", 0, inputs, started);
    return doc;
}
}  // namespace trialsent::pipeline
