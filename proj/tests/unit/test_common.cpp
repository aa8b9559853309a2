#include <doctest.h>

#include "fixtures.hpp"
#include "trialsent/error.hpp"
#include "trialsent/jsonl.hpp"
#include "trialsent/label.hpp"
#include "trialsent/random.hpp"
#include "trialsent/tokens.hpp"

using namespace trialsent;

TEST_CASE("labels round-trip through their string form") {
    for (auto label : {SentimentLabel::Positive, SentimentLabel::Negative, SentimentLabel::Neutral,
                       SentimentLabel::Unlabeled})
        CHECK(parse_label(to_string(label)) == label);
    CHECK(to_string(SentimentLabel::Unlabeled) == "UNK_UNK");
    CHECK_THROWS_AS(parse_label("positive "), InputError);
    CHECK_THROWS_AS(parse_real_label("UNK_UNK"), InputError);
    CHECK(class_index(SentimentLabel::Neutral) == 2);
}

TEST_CASE("error classes map to exit codes") {
    CHECK(ConfigError("x").exit_code() == 1);
    CHECK(InputError("x").exit_code() == 2);
    CHECK(ParseError("x").exit_code() == 2);
    CHECK(TransportError("x", true).exit_code() == 3);
    CHECK(MissingArtifactError("x").exit_code() == 1);
}

TEST_CASE("sha256 matches the published test vector") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("jsonl writes are byte-stable") {
    const auto dir = testing::scratch_dir("common_jsonl");
    std::vector<Json> rows{Json{{"b", 1}, {"a", "x"}}, Json{{"z", Json::array({1, 2})}}};
    write_jsonl(dir / "a.jsonl", rows);
    write_jsonl(dir / "b.jsonl", read_jsonl(dir / "a.jsonl"));
    CHECK(sha256_file(dir / "a.jsonl") == sha256_file(dir / "b.jsonl"));
    CHECK(read_text(dir / "a.jsonl") == "{\"a\":\"x\",\"b\":1}\n{\"z\":[1,2]}\n");
}

TEST_CASE("examples validate their token payload") {
    Example ex{"1", TokenSequence{{2, 5, 3, 0}, {1, 1, 1, 0}}, SentimentLabel::Negative};
    const auto back = example_from_json(to_json(ex));
    CHECK(back.pmid == "1");
    CHECK(back.tokens == ex.tokens);
    CHECK(back.label == SentimentLabel::Negative);
    CHECK(ex.tokens.content_length() == 3);

    auto bad = to_json(ex);
    bad["mask"] = Json::array({1, 1});
    CHECK_THROWS(example_from_json(bad));
    bad = to_json(ex);
    bad["mask"] = Json::array({1, 2, 1, 0});
    CHECK_THROWS(example_from_json(bad));
}

TEST_CASE("derived seeds differ per stream and are stable") {
    CHECK(derive_seed(42, 1) != derive_seed(42, 2));
    CHECK(derive_seed(42, 1) != derive_seed(43, 1));
    CHECK(derive_seed(42, 1) == derive_seed(42, 1));
}
