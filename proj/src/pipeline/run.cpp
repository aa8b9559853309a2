#include <array>

#include <spdlog/spdlog.h>

#include "trialsent/error.hpp"
#include "trialsent/pipeline.hpp"

namespace trialsent::pipeline {

namespace {

constexpr std::array<std::pair<Stage, std::string_view>, 9> kStageNames{{
    {Stage::Fetch, "fetch"},
    {Stage::Preprocess, "preprocess"},
    {Stage::Aggregate, "aggregate"},
    {Stage::Balance, "balance"},
    {Stage::Split, "split"},
    {Stage::Train, "train"},
    {Stage::Evaluate, "evaluate"},
    {Stage::Classify, "classify"},
    {Stage::Trend, "trend"},
}};

}  // namespace

std::string_view to_string(Stage stage) {
    for (const auto& [s, name] : kStageNames)
        if (s == stage) return name;
    return "?";
}

Stage parse_stage(std::string_view text) {
    for (const auto& [s, name] : kStageNames)
        if (name == text) return s;
    throw ConfigError("unknown stage '" + std::string(text) +
                      "' (expected fetch, preprocess, aggregate, balance, split, train, evaluate, classify or trend)");
}

void run_pipeline(const RunConfig& config, const std::filesystem::path& run_dir, const std::vector<Stage>& stages) {
    std::filesystem::create_directories(run_dir);
    auto at = [&](const char* name) { return run_dir / name; };
    for (const auto stage : stages) {
        spdlog::info("stage {}", to_string(stage));
        switch (stage) {
            case Stage::Fetch: {
                const auto transport = make_transport(config.fetch);
                ingest::EntrezOptions options;
                // replayed responses need no throttling
                if (config.fetch.fixtures) options.requests_per_second = 1000;
                fetch_stage(config.fetch, *transport, at(artifact::kRecords), options);
                break;
            }
            case Stage::Preprocess:
                if (!config.preprocess.vocab) throw ConfigError("config.preprocess.vocab is required for preprocess");
                preprocess_stage(at(artifact::kRecords), *config.preprocess.vocab, config.preprocess.max_length,
                                 config.preprocess.conclusion, at(artifact::kTokens));
                break;
            case Stage::Aggregate:
                if (!config.labels.annotations) throw ConfigError("config.labels.annotations is required for aggregate");
                aggregate_stage(*config.labels.annotations, config.labels.gold_raters, at(artifact::kGold),
                                at(artifact::kAdjudication), at(artifact::kHeldOut));
                break;
            case Stage::Balance:
                balance_stage(at(artifact::kTokens), at(artifact::kGold), config.seed, at(artifact::kBalanced));
                break;
            case Stage::Split:
                split_stage(at(artifact::kBalanced), at(artifact::kTokens), config.holdout, config.seed,
                            at(artifact::kTrain), at(artifact::kValidation));
                break;
            case Stage::Train: {
                const auto validation = at(artifact::kValidation);
                train_stage(at(artifact::kTrain),
                            std::filesystem::exists(validation) ? std::optional(validation) : std::nullopt,
                            config.encoder, config.gan, at(artifact::kModel));
                break;
            }
            case Stage::Evaluate: {
                require_artifact(at(artifact::kValidation), "split");
                classify_stage(at(artifact::kModel), at(artifact::kValidation), at(artifact::kValidationPredictions));
                std::optional<std::filesystem::path> rater;
                const auto held_out = at(artifact::kHeldOut);
                if (std::filesystem::exists(held_out) && !read_jsonl(held_out).empty()) rater = held_out;
                evaluate_stage(at(artifact::kValidationPredictions), at(artifact::kValidation), rater,
                               rater ? std::optional(at(artifact::kGold)) : std::nullopt, at(artifact::kReport),
                               at(artifact::kReportText));
                break;
            }
            case Stage::Classify:
                classify_stage(at(artifact::kModel), at(artifact::kTokens), at(artifact::kPredictions));
                break;
            case Stage::Trend:
                trend_stage(at(artifact::kPredictions), at(artifact::kRecords), GroupBy::Year, at(artifact::kTrend));
                break;
        }
    }
}

}  // namespace trialsent::pipeline
