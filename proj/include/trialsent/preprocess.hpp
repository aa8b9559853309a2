#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trialsent/ingest.hpp"
#include "trialsent/tokens.hpp"

namespace trialsent::preprocess {

struct SentenceList {
    std::vector<std::string> sentences;
    std::size_t total() const { return sentences.size(); }
};

/// Abbreviation-aware sentence splitter. Decimals, common Latin and
/// clinical abbreviations ("e.g.", "i.e.", "vs.", "et al.") and single-letter
/// initials never end a sentence. Non-empty input always yields at least one
/// sentence.
SentenceList segment_sentences(std::string_view text);

enum class ConclusionRule { StructuredHeading, TrailingFraction };

std::string_view to_string(ConclusionRule rule);

struct ConclusionText {
    std::string text;
    std::size_t n_sentences = 0;
    ConclusionRule source_rule = ConclusionRule::TrailingFraction;
};

struct ConclusionOptions {
    std::vector<std::string> conclusion_headings{"CONCLUSION", "CONCLUSIONS", "INTERPRETATION",
                                                 "CONCLUSIONS AND RELEVANCE"};
    double trailing_fraction = 0.125;
};

/// Number of trailing sentences taken from an unstructured abstract with
/// `total` sentences: max(1, ceil(fraction * total)), capped at total.
std::size_t trailing_sentence_count(std::size_t total, double fraction = 0.125);

ConclusionText extract_conclusion(const ingest::AbstractRecord& record,
                                  const ConclusionOptions& options = {});

/// Subword vocabulary in the standard one-token-per-line layout; the line
/// index is the token ID.
class Vocabulary {
public:
    static Vocabulary load(const std::filesystem::path& path);
    static Vocabulary from_tokens(std::vector<std::string> tokens);

    std::optional<std::int32_t> find(std::string_view token) const;
    const std::string& token(std::int32_t id) const;
    std::size_t size() const { return tokens_.size(); }

    std::int32_t cls_id() const { return cls_; }
    std::int32_t sep_id() const { return sep_; }
    std::int32_t pad_id() const { return pad_; }
    std::int32_t unk_id() const { return unk_; }

private:
    explicit Vocabulary(std::vector<std::string> tokens);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> index_;
    std::int32_t cls_ = 0, sep_ = 0, pad_ = 0, unk_ = 0;
};

/// Whitespace/punctuation pre-tokenizer followed by greedy longest-match
/// WordPiece segmentation ("##" marks word-internal pieces).
class WordPieceTokenizer {
public:
    explicit WordPieceTokenizer(const Vocabulary& vocab, bool lowercase = true);

    std::vector<std::string> basic_tokenize(std::string_view text) const;
    std::vector<std::int32_t> wordpiece_ids(std::string_view word) const;
    std::vector<std::int32_t> content_ids(std::string_view text) const;

    /// [CLS] + content + [SEP], truncated to max_length keeping [SEP] last,
    /// then padded. Throws ConfigError when max_length < 3.
    TokenSequence encode(std::string_view text, std::size_t max_length) const;

    /// Joins subword pieces back into space-separated words, dropping
    /// special tokens.
    std::string decode(const TokenSequence& tokens) const;

private:
    const Vocabulary& vocab_;
    bool lowercase_;
};

TokenSequence tokenize(const ConclusionText& conclusion, const Vocabulary& vocab,
                       std::size_t max_length);

struct PreprocessStats {
    std::size_t records = 0;
    std::size_t structured = 0;
    std::size_t trailing = 0;
    std::size_t truncated = 0;
};

/// Corpus -> tokenized examples. Labels come from `gold` (pmid -> label)
/// when present, otherwise UNK_UNK.
std::vector<Example> preprocess_corpus(const std::vector<ingest::AbstractRecord>& records,
                                       const Vocabulary& vocab, std::size_t max_length,
                                       const std::unordered_map<std::string, SentimentLabel>& gold,
                                       const ConclusionOptions& options,
                                       PreprocessStats* stats = nullptr);

}  // namespace trialsent::preprocess
