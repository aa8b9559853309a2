#include <array>
#include <cctype>
#include <cmath>

#include <spdlog/spdlog.h>

#include "trialsent/error.hpp"
#include "trialsent/preprocess.hpp"

namespace trialsent::preprocess {

namespace {

constexpr std::array<std::string_view, 24> kAbbreviations{
    "e.g", "i.e", "vs", "cf", "al", "approx", "dr", "mr", "mrs", "ms", "fig", "figs",
    "no", "nos", "st", "jr", "sr", "ca", "resp", "viz", "ref", "refs", "eq", "vol"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    bool pending = false;
    for (char c : s) {
        if (is_space(c)) {
            pending = !out.empty();
            continue;
        }
        if (pending) out += ' ';
        pending = false;
        out += c;
    }
    return out;
}

// Word immediately before the period at `dot`, without the period.
std::string_view word_before(std::string_view text, std::size_t dot) {
    std::size_t start = dot;
    while (start > 0 && !is_space(text[start - 1]) && text[start - 1] != '(' && text[start - 1] != '"')
        --start;
    return text.substr(start, dot - start);
}

bool period_is_terminal(std::string_view text, std::size_t dot) {
    const auto word = word_before(text, dot);
    if (word.empty()) return true;
    const auto lw = lower(word);
    for (auto abbr : kAbbreviations)
        if (lw == abbr) return false;
    // Single-letter initials such as "J." in "J. Smith".
    if (word.size() == 1 && std::isalpha(static_cast<unsigned char>(word[0]))) return false;
    return true;
}

}  // namespace

SentenceList segment_sentences(std::string_view raw) {
    const auto text = collapse_whitespace(raw);
    SentenceList out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        std::size_t end = i + 1;
        while (end < text.size() && (text[end] == ')' || text[end] == '"' || text[end] == '\'' ||
                                     text[end] == ']'))
            ++end;
        if (end < text.size() && text[end] != ' ') continue;  // decimals, "e.g" internals
        if (end + 1 < text.size() && std::islower(static_cast<unsigned char>(text[end + 1])))
            continue;
        if (c == '.' && !period_is_terminal(text, i)) continue;
        out.sentences.emplace_back(text.substr(start, end - start));
        start = end + 1;
        i = end;
    }
    if (start < text.size()) out.sentences.emplace_back(text.substr(start));
    if (out.sentences.empty() && !text.empty()) out.sentences.push_back(text);
    return out;
}

std::string_view to_string(ConclusionRule rule) {
    return rule == ConclusionRule::StructuredHeading ? "STRUCTURED_HEADING" : "TRAILING_FRACTION";
}

std::size_t trailing_sentence_count(std::size_t total, double fraction) {
    if (total == 0) return 0;
    // Guard against representation error in products that are exact in decimal.
    const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total) - 1e-9));
    return std::min(total, std::max<std::size_t>(1, n));
}

ConclusionText extract_conclusion(const ingest::AbstractRecord& record,
                                  const ConclusionOptions& options) {
    if (record.abstract_text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw InputError("record " + record.pmid + " has an empty abstract");

    if (record.is_structured) {
        std::string text;
        for (const auto& section : record.sections) {
            const auto heading = lower(section.heading);
            bool conclusion = false;
            for (const auto& h : options.conclusion_headings)
                if (heading == lower(h)) conclusion = true;
            if (conclusion && !section.text.empty()) {
                if (!text.empty()) text += ' ';
                text += section.text;
            }
        }
        if (!text.empty()) {
            const auto n = segment_sentences(text).total();
            return {collapse_whitespace(text), n, ConclusionRule::StructuredHeading};
        }
        spdlog::warn("structured abstract {} has no conclusion heading; using trailing sentences",
                     record.pmid);
    }

    const auto sentences = segment_sentences(record.abstract_text);
    const auto n = trailing_sentence_count(sentences.total(), options.trailing_fraction);
    std::string text;
    for (std::size_t i = sentences.total() - n; i < sentences.total(); ++i) {
        if (!text.empty()) text += ' ';
        text += sentences.sentences[i];
    }
    return {std::move(text), n, ConclusionRule::TrailingFraction};
}

}  // namespace trialsent::preprocess
