#include <algorithm>
#include <cmath>
#include <numeric>

#include "trialsent/corpus.hpp"
#include "trialsent/error.hpp"
#include "trialsent/random.hpp"

namespace trialsent::corpus {

std::array<std::size_t, kNumClasses> class_counts(const std::vector<Example>& examples) {
    std::array<std::size_t, kNumClasses> counts{};
    for (const auto& e : examples)
        if (is_real(e.label)) ++counts[class_index(e.label)];
    return counts;
}

namespace {

std::array<std::vector<std::size_t>, kNumClasses> indices_by_class(const std::vector<Example>& rows,
                                                                   const char* op) {
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!is_real(rows[i].label))
            throw InputError(std::string(op) + ": UNK_UNK row " + rows[i].pmid + " in labeled input");
        by_class[class_index(rows[i].label)].push_back(i);
    }
    return by_class;
}

}  // namespace

std::vector<Example> balance_classes(const std::vector<Example>& labeled, std::uint64_t seed) {
    const auto by_class = indices_by_class(labeled, "balance_classes");
    std::array<std::size_t, kNumClasses> sizes{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        sizes[c] = by_class[c].size();
        if (sizes[c] == 0)
            throw InputError(std::string("balance_classes: class ") +
                             std::string(to_string(kRealClasses[c])) + " is empty");
    }
    auto sorted = sizes;
    std::sort(sorted.begin(), sorted.end());
    const auto target = sorted[1];

    Rng rng(seed);
    std::vector<Example> out;
    out.reserve(target * kNumClasses);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto members = by_class[c];
        if (members.size() > target) {
            std::shuffle(members.begin(), members.end(), rng);
            members.resize(target);
            std::sort(members.begin(), members.end());
        } else if (members.size() < target) {
            std::uniform_int_distribution<std::size_t> pick(0, by_class[c].size() - 1);
            while (members.size() < target) members.push_back(by_class[c][pick(rng)]);
        }
        for (auto i : members) out.push_back(labeled[i]);
    }
    return out;
}

DatasetSplit split(const std::vector<Example>& examples, double holdout_fraction, std::uint64_t seed) {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw InputError("holdout fraction must lie in (0, 1)");
    if (examples.empty()) throw InputError("split: empty example list");
    const auto by_class = indices_by_class(examples, "split");

    const auto n = examples.size();
    const auto holdout = std::min(
        n, static_cast<std::size_t>(std::ceil(holdout_fraction * static_cast<double>(n) - 1e-9)));

    // Largest-remainder allocation of the hold-out across classes.
    std::array<std::size_t, kNumClasses> quota{};
    std::array<double, kNumClasses> remainder{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const double exact = static_cast<double>(holdout) * static_cast<double>(by_class[c].size()) /
                             static_cast<double>(n);
        quota[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        remainder[c] = exact - static_cast<double>(quota[c]);
        assigned += quota[c];
    }
    std::array<std::size_t, kNumClasses> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return remainder[a] > remainder[b] + 1e-12; });
    for (std::size_t k = 0; assigned < holdout; k = (k + 1) % kNumClasses) {
        const auto c = order[k];
        if (quota[c] < by_class[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }

    Rng rng(seed);
    std::vector<bool> held(n, false);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto members = by_class[c];
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t k = 0; k < quota[c]; ++k) held[members[k]] = true;
    }
    DatasetSplit out;
    out.seed = seed;
    for (std::size_t i = 0; i < n; ++i) (held[i] ? out.validation : out.train).push_back(examples[i]);
    return out;
}

std::vector<Example> TrainingCorpus::rows() const {
    auto out = labeled;
    out.insert(out.end(), unlabeled.begin(), unlabeled.end());
    return out;
}

TrainingCorpus TrainingCorpus::from_rows(const std::vector<Example>& rows) {
    TrainingCorpus corpus;
    for (const auto& r : rows) (is_real(r.label) ? corpus.labeled : corpus.unlabeled).push_back(r);
    return corpus;
}

TrainingCorpus assemble_training_corpus(const std::vector<Example>& labeled,
                                        const std::vector<Example>& unlabeled) {
    std::set<std::string> labeled_ids;
    for (const auto& e : labeled) {
        if (!is_real(e.label))
            throw InputError("assemble_training_corpus: labeled row " + e.pmid + " has UNK_UNK");
        labeled_ids.insert(e.pmid);
    }
    std::set<std::string> overlap;
    for (const auto& e : unlabeled)
        if (labeled_ids.count(e.pmid)) overlap.insert(e.pmid);
    if (!overlap.empty()) {
        std::string ids;
        for (const auto& id : overlap) ids += (ids.empty() ? "" : ", ") + id;
        throw InputError("labeled and unlabeled sets share pmids: " + ids);
    }
    TrainingCorpus corpus;
    corpus.labeled = labeled;
    corpus.unlabeled = unlabeled;
    for (auto& e : corpus.unlabeled) e.label = SentimentLabel::Unlabeled;
    return corpus;
}

}  // namespace trialsent::corpus
