#include <cctype>
#include <fstream>

#include <spdlog/spdlog.h>

#include "trialsent/error.hpp"
#include "trialsent/preprocess.hpp"

namespace trialsent::preprocess {

namespace {

constexpr std::size_t kMaxWordChars = 100;

bool is_ascii_punct(unsigned char c) { return c < 128 && std::ispunct(c); }

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i)
        index_.emplace(tokens_[i], static_cast<std::int32_t>(i));
    auto special = [&](const char* name) {
        const auto id = find(name);
        if (!id) throw ConfigError(std::string("vocabulary lacks special token ") + name);
        return *id;
    };
    cls_ = special("[CLS]");
    sep_ = special("[SEP]");
    pad_ = special("[PAD]");
    unk_ = special("[UNK]");
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open vocabulary " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    return Vocabulary(std::move(tokens));
}

std::optional<std::int32_t> Vocabulary::find(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw InputError("token id " + std::to_string(id) + " outside vocabulary");
    return tokens_[static_cast<std::size_t>(id)];
}

WordPieceTokenizer::WordPieceTokenizer(const Vocabulary& vocab, bool lowercase)
    : vocab_(vocab), lowercase_(lowercase) {}

std::vector<std::string> WordPieceTokenizer::basic_tokenize(std::string_view text) const {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) words.push_back(std::move(current));
        current.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 128 && (std::isspace(c) || std::iscntrl(c))) {
            flush();
        } else if (is_ascii_punct(c)) {
            flush();
            words.emplace_back(1, ch);
        } else {
            current += lowercase_ && c < 128 ? static_cast<char>(std::tolower(c)) : ch;
        }
    }
    flush();
    return words;
}

std::vector<std::int32_t> WordPieceTokenizer::wordpiece_ids(std::string_view word) const {
    if (word.size() > kMaxWordChars) return {vocab_.unk_id()};
    std::vector<std::int32_t> pieces;
    std::size_t start = 0;
    while (start < word.size()) {
        std::size_t end = word.size();
        std::optional<std::int32_t> match;
        while (start < end) {
            std::string piece(word.substr(start, end - start));
            if (start > 0) piece.insert(0, "##");
            if ((match = vocab_.find(piece))) break;
            --end;
        }
        if (!match) return {vocab_.unk_id()};
        pieces.push_back(*match);
        start = end;
    }
    return pieces;
}

std::vector<std::int32_t> WordPieceTokenizer::content_ids(std::string_view text) const {
    std::vector<std::int32_t> ids;
    for (const auto& word : basic_tokenize(text)) {
        const auto pieces = wordpiece_ids(word);
        ids.insert(ids.end(), pieces.begin(), pieces.end());
    }
    return ids;
}

TokenSequence WordPieceTokenizer::encode(std::string_view text, std::size_t max_length) const {
    if (max_length < 3)
        throw ConfigError("max_length must be >= 3 (start token, one content token, separator)");
    auto content = content_ids(text);
    if (content.size() > max_length - 2) content.resize(max_length - 2);

    TokenSequence seq;
    seq.ids.reserve(max_length);
    seq.ids.push_back(vocab_.cls_id());
    seq.ids.insert(seq.ids.end(), content.begin(), content.end());
    seq.ids.push_back(vocab_.sep_id());
    seq.mask.assign(seq.ids.size(), 1);
    seq.ids.resize(max_length, vocab_.pad_id());
    seq.mask.resize(max_length, 0);
    return seq;
}

std::string WordPieceTokenizer::decode(const TokenSequence& tokens) const {
    std::string out;
    for (std::size_t i = 0; i < tokens.ids.size(); ++i) {
        if (!tokens.mask[i]) continue;
        const auto id = tokens.ids[i];
        if (id == vocab_.cls_id() || id == vocab_.sep_id() || id == vocab_.pad_id()) continue;
        const auto& piece = vocab_.token(id);
        if (piece.rfind("##", 0) == 0) {
            out += piece.substr(2);
        } else {
            if (!out.empty()) out += ' ';
            out += piece;
        }
    }
    return out;
}

TokenSequence tokenize(const ConclusionText& conclusion, const Vocabulary& vocab,
                       std::size_t max_length) {
    if (conclusion.text.empty()) throw InputError("cannot tokenize an empty conclusion");
    return WordPieceTokenizer(vocab).encode(conclusion.text, max_length);
}

std::vector<Example> preprocess_corpus(const std::vector<ingest::AbstractRecord>& records,
                                       const Vocabulary& vocab, std::size_t max_length,
                                       const std::unordered_map<std::string, SentimentLabel>& gold,
                                       const ConclusionOptions& options, PreprocessStats* stats) {
    if (max_length < 3) throw ConfigError("max_length must be >= 3");
    WordPieceTokenizer tokenizer(vocab);
    PreprocessStats local;
    std::vector<Example> out;
    out.reserve(records.size());
    for (const auto& record : records) {
        const auto conclusion = extract_conclusion(record, options);
        if (conclusion.source_rule == ConclusionRule::StructuredHeading)
            ++local.structured;
        else
            ++local.trailing;
        if (tokenizer.content_ids(conclusion.text).size() > max_length - 2) ++local.truncated;
        Example e;
        e.pmid = record.pmid;
        e.tokens = tokenizer.encode(conclusion.text, max_length);
        const auto it = gold.find(record.pmid);
        e.label = it == gold.end() ? SentimentLabel::Unlabeled : it->second;
        out.push_back(std::move(e));
        ++local.records;
    }
    if (local.truncated > 0)
        spdlog::info("{} of {} conclusions truncated at {} tokens", local.truncated, local.records,
                     max_length);
    if (stats) *stats = local;
    return out;
}

}  // namespace trialsent::preprocess
