#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace trialsent {

/// Three real sentiment classes plus the unlabeled sentinel. The numeric
/// order of the real classes is the column order used everywhere (logits,
/// confusion matrices, probability vectors).
enum class SentimentLabel { Positive = 0, Negative = 1, Neutral = 2, Unlabeled = 3 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<SentimentLabel, kNumClasses> kRealClasses{
    SentimentLabel::Positive, SentimentLabel::Negative, SentimentLabel::Neutral};

std::string_view to_string(SentimentLabel label);

/// Parses "POSITIVE" | "NEGATIVE" | "NEUTRAL" | "UNK_UNK". Throws InputError.
SentimentLabel parse_label(std::string_view text);

/// Like parse_label but rejects the unlabeled sentinel.
SentimentLabel parse_real_label(std::string_view text);

inline std::size_t class_index(SentimentLabel label) { return static_cast<std::size_t>(label); }
inline bool is_real(SentimentLabel label) { return label != SentimentLabel::Unlabeled; }

}  // namespace trialsent
