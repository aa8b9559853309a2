#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "trialsent/label.hpp"
#include "trialsent/tokens.hpp"

namespace trialsent::corpus {

struct RaterAnnotation {
    std::string rater_id;
    std::string pmid;
    SentimentLabel label = SentimentLabel::Positive;

    bool operator==(const RaterAnnotation&) const = default;
};

Json to_json(const RaterAnnotation& a);
RaterAnnotation annotation_from_json(const Json& row);
std::vector<RaterAnnotation> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::vector<RaterAnnotation>& rows);

/// Majority-vote outcome for one abstract.
struct GoldLabel {
    std::string pmid;
    std::optional<SentimentLabel> label;  // set iff resolved
    std::array<int, kNumClasses> vote_counts{};
    bool resolved = false;
};

Json to_json(const GoldLabel& g);
GoldLabel gold_from_json(const Json& row);
std::vector<GoldLabel> read_gold(const std::filesystem::path& path);
void write_gold(const std::filesystem::path& path, const std::vector<GoldLabel>& rows);

/// pmid -> label for resolved gold rows. Also accepts tokenized-dataset
/// files, whose rows carry "pmid" and "label" too; UNK_UNK rows are skipped.
std::unordered_map<std::string, SentimentLabel> read_label_map(const std::filesystem::path& path);

/// Strict plurality over exactly three annotations of one abstract. A
/// three-way split is reported unresolved with no label.
GoldLabel majority_label(std::span<const RaterAnnotation> annotations);

struct Aggregation {
    std::vector<GoldLabel> gold;        // every pmid, resolved or not, sorted by pmid
    std::vector<GoldLabel> unresolved;  // adjudication queue
    std::vector<RaterAnnotation> held_out;  // annotations from non-gold raters
};

/// Applies majority_label per pmid using only the designated gold raters.
/// Every pmid must carry exactly one annotation from each gold rater.
Aggregation aggregate(const std::vector<RaterAnnotation>& annotations,
                      const std::set<std::string>& gold_raters);

/// Resamples every class to the median class size: the smallest class is
/// kept whole and padded by uniform draws with replacement, the largest is
/// reduced by uniform draws without replacement. Output is grouped by class
/// in POSITIVE, NEGATIVE, NEUTRAL order.
std::vector<Example> balance_classes(const std::vector<Example>& labeled, std::uint64_t seed);

struct DatasetSplit {
    std::vector<Example> train;
    std::vector<Example> validation;
    std::uint64_t seed = 0;
};

/// Class-stratified hold-out of ceil(fraction * N) examples. Per-class
/// quotas use largest-remainder allocation, so equal classes get equal
/// quotas whenever the hold-out size divides evenly.
DatasetSplit split(const std::vector<Example>& examples, double holdout_fraction, std::uint64_t seed);

/// Labeled rows followed by unlabeled rows; every unlabeled row carries
/// UNK_UNK. Provenance is positional.
struct TrainingCorpus {
    std::vector<Example> labeled;
    std::vector<Example> unlabeled;

    std::size_t size() const { return labeled.size() + unlabeled.size(); }
    std::vector<Example> rows() const;
    static TrainingCorpus from_rows(const std::vector<Example>& rows);
};

TrainingCorpus assemble_training_corpus(const std::vector<Example>& labeled,
                                        const std::vector<Example>& unlabeled);

std::array<std::size_t, kNumClasses> class_counts(const std::vector<Example>& examples);

}  // namespace trialsent::corpus
