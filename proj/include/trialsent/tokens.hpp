#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trialsent/jsonl.hpp"
#include "trialsent/label.hpp"

namespace trialsent {

/// Fixed-length subword-ID sequence with its attention mask.
struct TokenSequence {
    std::vector<std::int32_t> ids;
    std::vector<std::uint8_t> mask;

    std::size_t length() const { return ids.size(); }
    std::size_t content_length() const;
    bool operator==(const TokenSequence&) const = default;
};

/// One row of a tokenized dataset file.
struct Example {
    std::string pmid;
    TokenSequence tokens;
    SentimentLabel label = SentimentLabel::Unlabeled;

    bool operator==(const Example&) const = default;
};

Json to_json(const Example& example);
Example example_from_json(const Json& row);

std::vector<Example> read_examples(const std::filesystem::path& path);
void write_examples(const std::filesystem::path& path, const std::vector<Example>& examples);

}  // namespace trialsent
