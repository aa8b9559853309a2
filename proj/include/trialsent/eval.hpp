#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trialsent/corpus.hpp"
#include "trialsent/label.hpp"

namespace trialsent::eval {

/// counts[gold][predicted], classes in POSITIVE, NEGATIVE, NEUTRAL order.
struct ConfusionMatrix {
    std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

    std::size_t total() const;
    std::size_t trace() const;
    bool operator==(const ConfusionMatrix&) const = default;
};

struct EvalReport {
    ConfusionMatrix matrix;
    double accuracy = 0.0;
    std::array<double, kNumClasses> precision{};
    std::array<double, kNumClasses> recall{};
    std::array<double, kNumClasses> per_class_f1{};
    double macro_f1 = 0.0;
    std::size_t n = 0;
};

using LabelPair = std::pair<SentimentLabel, SentimentLabel>;  // (gold, predicted)

ConfusionMatrix confusion(std::span<const LabelPair> pairs);

/// Accuracy, per-class precision/recall/F1 and macro F1. F1 is 0 when
/// precision + recall is 0. Throws InputError on an empty matrix.
EvalReport metrics(const ConfusionMatrix& matrix);

struct Prediction {
    std::string pmid;
    SentimentLabel label = SentimentLabel::Positive;
    std::array<double, kNumClasses> probs{};
};

Json to_json(const Prediction& p);
Prediction prediction_from_json(const Json& row);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& rows);

/// Scores predictions against gold rows (pmid, label); gold rows whose pmid
/// has no prediction are an error.
EvalReport evaluate_predictions(const std::vector<Prediction>& predictions,
                                const std::vector<std::pair<std::string, SentimentLabel>>& gold);

/// Treats a held-out rater's labels as predictions against resolved gold.
EvalReport compare_rater(const std::vector<corpus::RaterAnnotation>& rater,
                         const std::vector<corpus::GoldLabel>& gold);

Json to_json(const EvalReport& report);

struct ComparisonRow {
    std::string classifier;
    std::string classes;
    EvalReport report;
};

/// Aligned plain-text table: classifier, classes, n, accuracy, macro F1.
std::string render_table(const std::vector<ComparisonRow>& rows);

/// Plain-text rendering of a confusion matrix with class headers.
std::string render_matrix(const ConfusionMatrix& matrix);

}  // namespace trialsent::eval
