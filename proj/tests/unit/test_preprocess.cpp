#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "trialsent/error.hpp"
#include "trialsent/preprocess.hpp"

using namespace trialsent;
using namespace trialsent::preprocess;

namespace {

ingest::AbstractRecord unstructured(std::size_t sentences) {
    ingest::AbstractRecord r;
    r.pmid = "p" + std::to_string(sentences);
    for (std::size_t i = 0; i < sentences; ++i) r.abstract_text += "Sentence number " + std::to_string(i + 1) + ". ";
    return r;
}

ingest::AbstractRecord structured(const std::string& text) {
    ingest::AbstractRecord r;
    r.pmid = "s";
    r.abstract_text = text;
    r.sections = ingest::split_sections(text, ingest::HeadingLexicon::defaults());
    r.is_structured = !r.sections.empty();
    return r;
}

Vocabulary toy_vocab() { return Vocabulary::load(testing::fixture_path("vocab/toy_vocab.txt")); }

}  // namespace

TEST_CASE("sentence counts match the hand-counted golden file") {
    const auto rows = read_jsonl(testing::fixture_path("sentences/golden.jsonl"));
    REQUIRE(rows.size() == 25);
    for (const auto& row : rows) {
        const auto text = row["text"].get<std::string>();
        INFO(text);
        CHECK(segment_sentences(text).total() == row["sentences"].get<std::size_t>());
    }
}

TEST_CASE("trailing count agrees with the integer oracle") {
    for (std::size_t s = 1; s <= 1000; ++s) CHECK(trailing_sentence_count(s) == testing::oracle_trailing_count(s));
    CHECK(trailing_sentence_count(0) == 0);
    CHECK(trailing_sentence_count(8) == 1);
    CHECK(trailing_sentence_count(9) == 2);
}

TEST_CASE("unstructured abstracts take the trailing sentences") {
    const auto c = extract_conclusion(unstructured(17));
    CHECK(c.source_rule == ConclusionRule::TrailingFraction);
    CHECK(c.n_sentences == 3);
    CHECK(c.text == "Sentence number 15. Sentence number 16. Sentence number 17.");
    CHECK(extract_conclusion(unstructured(1)).text == "Sentence number 1.");
}

TEST_CASE("structured abstracts take the conclusion section") {
    const auto c = extract_conclusion(structured("BACKGROUND: Pain hurts. METHODS: We tried. CONCLUSION: X is effective."));
    CHECK(c.source_rule == ConclusionRule::StructuredHeading);
    CHECK(c.text == "X is effective.");
    CHECK(c.n_sentences == 1);

    // no conclusion heading: fall back to the trailing rule
    const auto fallback = extract_conclusion(structured("BACKGROUND: Pain hurts. RESULTS: It fell. It rose."));
    CHECK(fallback.source_rule == ConclusionRule::TrailingFraction);
    CHECK(fallback.text == "It rose.");

    ingest::AbstractRecord empty;
    empty.pmid = "e";
    empty.abstract_text = "  ";
    CHECK_THROWS_AS(extract_conclusion(empty), InputError);
}

TEST_CASE("vocabulary requires the special tokens") {
    CHECK_THROWS_AS(Vocabulary::from_tokens({"[PAD]", "[CLS]", "a"}), ConfigError);
    const auto v = toy_vocab();
    CHECK(v.token(v.pad_id()) == "[PAD]");
    CHECK(v.pad_id() == 0);
    CHECK(v.token(v.cls_id()) == "[CLS]");
    CHECK(v.find("nausea").has_value());
    CHECK_FALSE(v.find("hallucinations").has_value());
}

TEST_CASE("wordpiece segmentation is greedy longest-match") {
    const auto v = toy_vocab();
    WordPieceTokenizer tok(v);
    const auto ids = tok.wordpiece_ids("dexmedetomidine");
    std::vector<std::string> pieces;
    for (auto id : ids) pieces.push_back(v.token(id));
    CHECK(pieces == std::vector<std::string>{"dex", "##med", "##eto", "##mid", "##ine"});
    CHECK(tok.wordpiece_ids("hallucinations") == std::vector<std::int32_t>{v.unk_id()});
    CHECK(tok.basic_tokenize("Pain fell (P < .05).") ==
          std::vector<std::string>{"pain", "fell", "(", "p", "<", ".", "05", ")", "."});
}

TEST_CASE("encode frames, truncates and pads") {
    const auto v = toy_vocab();
    WordPieceTokenizer tok(v);
    const auto seq = tok.encode("Nausea was reduced.", 10);
    REQUIRE(seq.length() == 10);
    CHECK(seq.ids[0] == v.cls_id());
    // nausea was reduce ##d . -> 5 pieces
    CHECK(seq.ids[6] == v.sep_id());
    CHECK(seq.content_length() == 7);
    for (std::size_t i = 7; i < 10; ++i) {
        CHECK(seq.ids[i] == v.pad_id());
        CHECK(seq.mask[i] == 0);
    }

    const auto cut = tok.encode("Nausea was reduced in patients after surgery.", 5);
    CHECK(cut.ids.front() == v.cls_id());
    CHECK(cut.ids.back() == v.sep_id());
    CHECK(cut.content_length() == 5);
    CHECK_THROWS_AS(tok.encode("x", 2), ConfigError);
}

TEST_CASE("decode inverts in-vocabulary text up to normalisation") {
    const auto v = toy_vocab();
    WordPieceTokenizer tok(v);
    const std::string text = "Dexmedetomidine reduced emergence agitation without delaying discharge.";
    CHECK(tok.decode(tok.encode(text, 64)) == "dexmedetomidine reduced emergence agitation without delaying discharge .");
}

TEST_CASE("preprocess_corpus labels from gold and counts rules") {
    const auto v = toy_vocab();
    std::vector<ingest::AbstractRecord> records{
        structured("BACKGROUND: Pain. CONCLUSIONS: Nausea was reduced."), unstructured(3)};
    records[1].pmid = "u";
    PreprocessStats stats;
    const auto out = preprocess_corpus(records, v, 16, {{"s", SentimentLabel::Positive}}, {}, &stats);
    REQUIRE(out.size() == 2);
    CHECK(out[0].label == SentimentLabel::Positive);
    CHECK(out[1].label == SentimentLabel::Unlabeled);
    CHECK(stats.structured == 1);
    CHECK(stats.trailing == 1);
    CHECK_THROWS_AS(preprocess_corpus(records, v, 2, {}, {}), ConfigError);
}
