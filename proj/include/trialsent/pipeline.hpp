#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trialsent/encoder.hpp"
#include "trialsent/eval.hpp"
#include "trialsent/ingest.hpp"
#include "trialsent/preprocess.hpp"
#include "trialsent/ssgan.hpp"

namespace trialsent::pipeline {

struct FetchSettings {
    std::string field;
    std::size_t max_records = 1000;
    std::optional<int> from_year;
    std::optional<int> to_year;
    std::string api_key_env = "NCBI_API_KEY";
    /// Recorded-response directory; when set, fetch never touches the network.
    std::optional<std::filesystem::path> fixtures;
};

struct PreprocessSettings {
    std::optional<std::filesystem::path> vocab;
    std::size_t max_length = 128;
    preprocess::ConclusionOptions conclusion;
};

struct LabelSettings {
    std::optional<std::filesystem::path> annotations;
    std::set<std::string> gold_raters;
};

/// Everything a run needs. Relative paths resolve against the config
/// file's directory.
struct RunConfig {
    std::uint64_t seed = 42;
    FetchSettings fetch;
    PreprocessSettings preprocess;
    LabelSettings labels;
    double holdout = 0.3;
    encoder::EncoderConfig encoder;
    ssgan::GanConfig gan;

    static RunConfig from_json(const Json& doc, const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& path);
    /// Replaces the run seed and the training seed.
    void override_seed(std::uint64_t seed);
    Json to_json() const;
};

/// Fixed artifact names inside a run directory.
namespace artifact {
inline constexpr const char* kRecords = "records.jsonl";
inline constexpr const char* kTokens = "tokens.jsonl";
inline constexpr const char* kGold = "gold.jsonl";
inline constexpr const char* kAdjudication = "adjudication.jsonl";
inline constexpr const char* kHeldOut = "held_out.jsonl";
inline constexpr const char* kBalanced = "balanced.jsonl";
inline constexpr const char* kTrain = "train.jsonl";
inline constexpr const char* kValidation = "validation.jsonl";
inline constexpr const char* kModel = "model";
inline constexpr const char* kValidationPredictions = "validation_predictions.jsonl";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kReportText = "report.txt";
inline constexpr const char* kPredictions = "predictions.jsonl";
inline constexpr const char* kTrend = "trend.csv";
}  // namespace artifact

/// Throws MissingArtifactError naming the stage that produces `path`
/// when it does not exist.
void require_artifact(const std::filesystem::path& path, const std::string& producing_stage);

/// Writes `<output>.meta.json`: stage, seed, sha256 of every input,
/// sha256 of the output file (if a regular file) and UTC timestamps.
void write_stage_metadata(const std::filesystem::path& output, const std::string& stage, std::uint64_t seed,
                          const std::vector<std::filesystem::path>& inputs, const std::string& started_at);

std::string utc_timestamp();

// Stages. Each reads explicit inputs and writes explicit outputs plus
// metadata; run_pipeline wires them to the run directory.

void fetch_stage(const FetchSettings& settings, ingest::HttpTransport& transport, const std::filesystem::path& out,
                 const ingest::EntrezOptions& options = {});
std::unique_ptr<ingest::HttpTransport> make_transport(const FetchSettings& settings);

preprocess::PreprocessStats preprocess_stage(const std::filesystem::path& records, const std::filesystem::path& vocab,
                                             std::size_t max_length, const preprocess::ConclusionOptions& options,
                                             const std::filesystem::path& out);

corpus::Aggregation aggregate_stage(const std::filesystem::path& annotations, const std::set<std::string>& gold_raters,
                                    const std::filesystem::path& out_gold,
                                    const std::filesystem::path& out_adjudication,
                                    const std::filesystem::path& out_held_out);

/// Attaches gold labels to tokenized rows and balances to the median class.
std::vector<Example> balance_stage(const std::filesystem::path& tokens, const std::filesystem::path& gold,
                                   std::uint64_t seed, const std::filesystem::path& out);

/// Stratified hold-out of the balanced rows. The training file gets the
/// remaining labeled rows followed by every tokenized row without a gold
/// label, masked to UNK_UNK.
corpus::DatasetSplit split_stage(const std::filesystem::path& balanced, const std::filesystem::path& tokens,
                                 double holdout, std::uint64_t seed, const std::filesystem::path& out_train,
                                 const std::filesystem::path& out_validation);

ssgan::TrainedModel train_stage(const std::filesystem::path& train, const std::optional<std::filesystem::path>& validation,
                                const encoder::EncoderConfig& encoder, const ssgan::GanConfig& gan,
                                const std::filesystem::path& out_model);

std::vector<eval::Prediction> classify_stage(const std::filesystem::path& model, const std::filesystem::path& tokens,
                                             const std::filesystem::path& out);

/// Scores predictions and/or a held-out rater against gold. Predictions
/// are scored against `gold` (a gold or tokenized file); the rater against
/// `rater_gold`, defaulting to `gold`. Writes JSON and a plain-text table.
Json evaluate_stage(const std::optional<std::filesystem::path>& predictions, const std::filesystem::path& gold,
                    const std::optional<std::filesystem::path>& rater, const std::optional<std::filesystem::path>& rater_gold,
                    const std::filesystem::path& out_json, const std::optional<std::filesystem::path>& out_text);

// ---------------------------------------------------------------------------
// Trend analysis

enum class GroupBy { Year, Field };
GroupBy parse_group_by(std::string_view text);

struct TrendRow {
    std::string key;
    std::array<std::size_t, kNumClasses> counts{};
    std::array<double, kNumClasses> fractions{};
    std::size_t total() const;
};

/// Predictions grouped by year or field, sorted by key. Throws InputError
/// listing pmids that have no record or no group key.
std::vector<TrendRow> trend(const std::vector<eval::Prediction>& predictions,
                            const std::vector<ingest::AbstractRecord>& records, GroupBy group_by);
std::string render_trend_csv(const std::vector<TrendRow>& rows, GroupBy group_by);
std::string render_trend_table(const std::vector<TrendRow>& rows, GroupBy group_by);

void trend_stage(const std::filesystem::path& predictions, const std::filesystem::path& records, GroupBy group_by,
                 const std::filesystem::path& out_csv);

// ---------------------------------------------------------------------------

enum class Stage { Fetch, Preprocess, Aggregate, Balance, Split, Train, Evaluate, Classify, Trend };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);

/// Runs `stages` in order against `run_dir`, each reading the previous
/// stages' artifacts from there.
void run_pipeline(const RunConfig& config, const std::filesystem::path& run_dir, const std::vector<Stage>& stages);

}  // namespace trialsent::pipeline
