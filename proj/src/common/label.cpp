#include "trialsent/label.hpp"

#include "trialsent/error.hpp"

namespace trialsent {

std::string_view to_string(SentimentLabel label) {
    switch (label) {
        case SentimentLabel::Positive: return "POSITIVE";
        case SentimentLabel::Negative: return "NEGATIVE";
        case SentimentLabel::Neutral: return "NEUTRAL";
        case SentimentLabel::Unlabeled: return "UNK_UNK";
    }
    return "UNK_UNK";
}

SentimentLabel parse_label(std::string_view text) {
    if (text == "POSITIVE") return SentimentLabel::Positive;
    if (text == "NEGATIVE") return SentimentLabel::Negative;
    if (text == "NEUTRAL") return SentimentLabel::Neutral;
    if (text == "UNK_UNK") return SentimentLabel::Unlabeled;
    throw InputError("unknown sentiment label '" + std::string(text) + "'");
}

SentimentLabel parse_real_label(std::string_view text) {
    const auto label = parse_label(text);
    if (!is_real(label))
        throw InputError("label must be POSITIVE, NEGATIVE or NEUTRAL, got UNK_UNK");
    return label;
}

}  // namespace trialsent
