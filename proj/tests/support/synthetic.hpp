#pragma once

#include <vector>

#include "trialsent/corpus.hpp"
#include "trialsent/random.hpp"
#include "trialsent/tokens.hpp"

namespace trialsent::testing {

/// Token-pattern corpus for the tiny encoder. Ids 0..3 are PAD, UNK, CLS,
/// SEP; each class owns a block of signature ids and the rest are shared
/// filler. Every sequence mixes `signature_tokens` ids from its own block
/// with filler, so the classes are separable by token counts.
struct SyntheticOptions {
    std::size_t labeled_per_class = 20;
    std::size_t unlabeled = 600;
    std::size_t validation_per_class = 20;
    std::size_t vocab_size = 64;
    std::size_t block_size = 8;
    std::size_t max_length = 16;
    std::size_t signature_tokens = 3;
    std::size_t filler_tokens = 6;
    std::uint64_t seed = 1;
};

struct SyntheticCorpus {
    corpus::TrainingCorpus train;
    std::vector<Example> validation;
    std::vector<SentimentLabel> unlabeled_truth;  // hidden labels of the unlabeled rows
};

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options);

/// One random sequence of the given class.
TokenSequence synthetic_sequence(SentimentLabel label, const SyntheticOptions& options, Rng& rng);

}  // namespace trialsent::testing
