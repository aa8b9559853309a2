#include "trialsent/error.hpp"
#include "trialsent/pipeline.hpp"

namespace trialsent::pipeline {

namespace {

void reject_unknown(const Json& obj, const std::string& where, const std::set<std::string>& known) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : obj.items())
        if (!known.count(key)) throw ConfigError(where + "." + key + " is not a recognised setting");
}

}  // namespace

RunConfig RunConfig::from_json(const Json& doc, const std::filesystem::path& base_dir) {
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    reject_unknown(doc, "config", {"seed", "fetch", "preprocess", "labels", "corpus", "encoder", "gan"});
    RunConfig c;
    std::string where = "config";
    try {
        c.seed = doc.value("seed", c.seed);
        if (doc.contains("fetch")) {
            const auto& f = doc["fetch"];
            where = "config.fetch";
            reject_unknown(f, where, {"field", "max_records", "from_year", "to_year", "api_key_env", "fixtures"});
            c.fetch.field = f.value("field", "");
            c.fetch.max_records = f.value("max_records", c.fetch.max_records);
            if (f.contains("from_year")) c.fetch.from_year = f["from_year"].get<int>();
            if (f.contains("to_year")) c.fetch.to_year = f["to_year"].get<int>();
            c.fetch.api_key_env = f.value("api_key_env", c.fetch.api_key_env);
            if (f.contains("fixtures")) c.fetch.fixtures = resolve(f["fixtures"].get<std::string>());
            if (c.fetch.from_year.has_value() != c.fetch.to_year.has_value())
                throw ConfigError("config.fetch: from_year and to_year must be given together");
        }
        if (doc.contains("preprocess")) {
            const auto& p = doc["preprocess"];
            where = "config.preprocess";
            reject_unknown(p, where, {"vocab", "max_length", "conclusion_headings", "trailing_fraction"});
            if (p.contains("vocab")) c.preprocess.vocab = resolve(p["vocab"].get<std::string>());
            c.preprocess.max_length = p.value("max_length", c.preprocess.max_length);
            if (p.contains("conclusion_headings"))
                c.preprocess.conclusion.conclusion_headings = p["conclusion_headings"].get<std::vector<std::string>>();
            c.preprocess.conclusion.trailing_fraction =
                p.value("trailing_fraction", c.preprocess.conclusion.trailing_fraction);
            if (c.preprocess.max_length < 3) throw ConfigError("config.preprocess.max_length must be at least 3");
            if (!(c.preprocess.conclusion.trailing_fraction > 0.0 && c.preprocess.conclusion.trailing_fraction <= 1.0))
                throw ConfigError("config.preprocess.trailing_fraction must lie in (0, 1]");
        }
        if (doc.contains("labels")) {
            const auto& l = doc["labels"];
            where = "config.labels";
            reject_unknown(l, where, {"annotations", "gold_raters"});
            if (l.contains("annotations")) c.labels.annotations = resolve(l["annotations"].get<std::string>());
            if (l.contains("gold_raters")) {
                const auto raters = l["gold_raters"].get<std::vector<std::string>>();
                c.labels.gold_raters = {raters.begin(), raters.end()};
                if (c.labels.gold_raters.size() != 3 || raters.size() != 3)
                    throw ConfigError("config.labels.gold_raters must name exactly three distinct raters");
            }
        }
        if (doc.contains("corpus")) {
            const auto& k = doc["corpus"];
            where = "config.corpus";
            reject_unknown(k, where, {"holdout"});
            c.holdout = k.value("holdout", c.holdout);
            if (!(c.holdout > 0.0 && c.holdout < 1.0)) throw ConfigError("config.corpus.holdout must lie in (0, 1)");
        }
        if (doc.contains("encoder")) {
            where = "config.encoder";
            reject_unknown(doc["encoder"], where,
                           {"kind", "checkpoint_path", "output_dim", "trainable", "vocab_size", "seed", "dropout"});
            c.encoder = encoder::EncoderConfig::from_json(doc["encoder"]);
            if (c.encoder.checkpoint_path) c.encoder.checkpoint_path = resolve(c.encoder.checkpoint_path->string());
        }
        where = "config.gan";
        Json gan = doc.value("gan", Json::object());
        if (!gan.contains("seed")) gan["seed"] = c.seed;
        c.gan = ssgan::GanConfig::from_json(gan);
        c.gan.validate();
    } catch (const Json::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " does not exist");
    Json doc;
    try {
        doc = Json::parse(read_text(path));
    } catch (const Json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(doc, path.parent_path());
}

void RunConfig::override_seed(std::uint64_t s) {
    seed = s;
    gan.seed = s;
}

Json RunConfig::to_json() const {
    Json fetch_doc{{"field", fetch.field}, {"max_records", fetch.max_records}, {"api_key_env", fetch.api_key_env}};
    if (fetch.from_year) fetch_doc["from_year"] = *fetch.from_year;
    if (fetch.to_year) fetch_doc["to_year"] = *fetch.to_year;
    if (fetch.fixtures) fetch_doc["fixtures"] = fetch.fixtures->string();
    Json pre{{"max_length", preprocess.max_length},
             {"conclusion_headings", preprocess.conclusion.conclusion_headings},
             {"trailing_fraction", preprocess.conclusion.trailing_fraction}};
    if (preprocess.vocab) pre["vocab"] = preprocess.vocab->string();
    Json labels_doc{{"gold_raters", labels.gold_raters}};
    if (labels.annotations) labels_doc["annotations"] = labels.annotations->string();
    return Json{{"seed", seed},
                {"fetch", fetch_doc},
                {"preprocess", pre},
                {"labels", labels_doc},
                {"corpus", {{"holdout", holdout}}},
                {"encoder", encoder.to_json()},
                {"gan", gan.to_json()}};
}

}  // namespace trialsent::pipeline
