#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "sim_eutils.hpp"
#include "trialsent/error.hpp"
#include "trialsent/ingest.hpp"
#include "trialsent/random.hpp"

#include <random>

using namespace trialsent;
using namespace trialsent::ingest;

namespace {

/// Time only moves when someone sleeps.
class ManualClock final : public Clock {
public:
    time_point now() const override { return now_; }
    void sleep_until(time_point t) override {
        if (t > now_) now_ = t;
    }
    void advance(std::chrono::milliseconds d) { now_ += d; }

private:
    time_point now_{};
};

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) out.push_back(line);
    return out;
}

std::string medline_record(const std::string& pmid, const std::string& jid, int year, const std::string& ab) {
    return "PMID- " + pmid + "\nDP  - " + std::to_string(year) + " Jan\nTI  - Title " + pmid + "\nAB  - " + ab +
           "\nPT  - Clinical Trial\nJID - " + jid + "\n";
}

std::vector<AbstractRecord> parse_all(const std::string& text) {
    std::vector<AbstractRecord> out;
    for (const auto& raw : split_medline(text))
        if (auto r = parse_medline_record(raw, HeadingLexicon::defaults(), "Anesthesiology")) out.push_back(*r);
    return out;
}

}  // namespace

TEST_CASE("the 20-record fixture parses to the hand-extracted pmids") {
    const auto records = parse_all(read_text(testing::fixture_path("medline/anesthesiology.txt")));
    const auto expected = lines_of(read_text(testing::fixture_path("medline/anesthesiology_pmids.txt")));
    REQUIRE(records.size() == 20);
    REQUIRE(expected.size() == 20);
    for (std::size_t i = 0; i < records.size(); ++i) CHECK(records[i].pmid == expected[i]);
    CHECK(records[0].journal_id == "1300217");
    CHECK(records[0].year == 2016);
    CHECK(records[0].field == "Anesthesiology");
    CHECK(records[0].title == "Dexamethasone and postoperative nausea after laparoscopic cholecystectomy: a randomized trial.");
}

TEST_CASE("continuation lines are joined with single spaces") {
    const auto records = parse_all(read_text(testing::fixture_path("medline/anesthesiology.txt")));
    CHECK(records[0].abstract_text.find("laparoscopic surgery. METHODS:") != std::string::npos);
    CHECK(records[0].abstract_text.find("  ") == std::string::npos);
}

TEST_CASE("structured and unstructured abstracts") {
    const auto structured = parse_all(medline_record("1", "1300217", 2020, "CONCLUSIONS: Drug X reduced pain."));
    REQUIRE(structured.size() == 1);
    CHECK(structured[0].is_structured);
    REQUIRE(!structured[0].sections.empty());
    CHECK(structured[0].sections.back().heading == "CONCLUSIONS");
    CHECK(structured[0].sections.back().text == "Drug X reduced pain.");

    const auto plain = parse_all(medline_record("2", "1300217", 2020, "Drug X reduced pain. It was safe."));
    REQUIRE(plain.size() == 1);
    CHECK_FALSE(plain[0].is_structured);
    CHECK(plain[0].sections.empty());
}

TEST_CASE("headings need a colon and a sentence boundary") {
    const auto lex = HeadingLexicon::defaults();
    CHECK(split_sections("The methods were simple. Results improved.", lex).empty());
    const auto s = split_sections("Background text. METHODS: we did it. Results: it worked.", lex);
    REQUIRE(s.size() == 3);
    CHECK(s[0].heading.empty());
    CHECK(s[1].heading == "METHODS");
    CHECK(s[2].heading == "RESULTS");
    CHECK(s[2].text == "it worked.");
    const auto longest = split_sections("CONCLUSIONS AND RELEVANCE: It helps.", lex);
    REQUIRE(longest.size() == 1);
    CHECK(longest[0].heading == "CONCLUSIONS AND RELEVANCE");
}

TEST_CASE("malformed records") {
    const auto lex = HeadingLexicon::defaults();
    CHECK_THROWS_AS(parse_medline_record(RawMedlineRecord{"TI  - no id\nAB  - text"}, lex), ParseError);
    CHECK_FALSE(parse_medline_record(RawMedlineRecord{"PMID- 5\nTI  - no abstract"}, lex).has_value());
}

TEST_CASE("publication year falls back through DP, DEP, EDAT") {
    const auto lex = HeadingLexicon::defaults();
    auto r = parse_medline_record(RawMedlineRecord{"PMID- 5\nAB  - x.\nDEP - 20190304\nEDAT- 2018/01/01 00:00"}, lex);
    REQUIRE(r);
    CHECK(r->year == 2019);
    r = parse_medline_record(RawMedlineRecord{"PMID- 5\nAB  - x.\nEDAT- 2018/01/01 00:00"}, lex);
    REQUIRE(r);
    CHECK(r->year == 2018);
}

TEST_CASE("corpus JSONL round-trips every fixture record") {
    const auto records = parse_all(read_text(testing::fixture_path("medline/anesthesiology.txt")));
    for (const auto& r : records) CHECK(record_from_json(to_json(r)) == r);
    const auto dir = testing::scratch_dir("ingest_roundtrip");
    write_corpus(dir / "c.jsonl", records);
    CHECK(read_corpus(dir / "c.jsonl") == records);

    auto dup = records;
    dup.push_back(records.front());
    write_corpus(dir / "dup.jsonl", dup);
    CHECK_THROWS_AS(read_corpus(dir / "dup.jsonl"), InputError);
}

TEST_CASE("request keys ignore credentials and parameter order") {
    const auto a = request_key("esearch.fcgi", {{"term", "x"}, {"db", "pubmed"}, {"api_key", "secret"}, {"tool", "t"}});
    const auto b = request_key("esearch.fcgi", {{"db", "pubmed"}, {"term", "x"}});
    CHECK(a == b);
    CHECK(a.find("secret") == std::string::npos);
    CHECK(request_key("efetch.fcgi", {{"db", "pubmed"}}) != request_key("esearch.fcgi", {{"db", "pubmed"}}));
}

TEST_CASE("search terms") {
    FieldQuery q;
    q.field_name = "Anesthesiology";
    q.max_records = 5;
    q.date_range = YearRange{2015, 2019};
    CHECK(EntrezClient::catalog_term("Anesthesiology") == "\"Anesthesiology\"[st] AND ncbijournals[filter]");
    CHECK(EntrezClient::pubmed_term(q, {"1300217", "1310650"}) ==
          "(1300217[jid] OR 1310650[jid]) AND \"Clinical Trial\"[pt] AND 2015:2019[dp]");
    q.max_records = 0;
    CHECK_THROWS_AS(q.validate(), InputError);
}

TEST_CASE("recorded catalog fixture resolves exactly the two anesthesiology journals") {
    ReplayTransport replay(testing::fixture_path("eutils"));
    EntrezOptions opts;
    opts.requests_per_second = 1000;
    EntrezClient client(replay, opts);
    CHECK(client.resolve_field_journals("Anesthesiology") == std::set<std::string>{"1300217", "1310650"});
}

TEST_CASE("catalog ids are zero-padded to journal-id width") {
    auto sim = testing::fixture_eutils();
    ManualClock clock;
    EntrezClient client(sim, {}, clock);
    CHECK(client.resolve_field_journals("Cardiology") == std::set<std::string>{"0372351"});
    CHECK(client.resolve_field_journals("Dermatology").empty());
}

TEST_CASE("max_records truncates a 50-record store to 12") {
    std::string medline;
    for (int i = 0; i < 50; ++i)
        medline += medline_record(std::to_string(40000000 + i), "1300217", 2015 + i % 5, "Text " + std::to_string(i) + ".") + "\n";
    testing::SimulatedEutils sim({{"Anesthesiology", {"1300217"}}}, testing::sim_records_from_medline(medline));
    ManualClock clock;
    EntrezOptions opts;
    opts.page_size = 5;
    opts.fetch_batch = 4;
    opts.workers = 3;
    EntrezClient client(sim, opts, clock);
    FieldQuery q;
    q.field_name = "Anesthesiology";
    q.max_records = 12;
    const auto records = harvest(client, q, HeadingLexicon::defaults());
    REQUIRE(records.size() == 12);
    for (std::size_t i = 0; i < records.size(); ++i) CHECK(records[i].pmid == std::to_string(40000000 + i));

    q.max_records = 100;
    q.date_range = YearRange{2016, 2016};
    const auto in_2016 = harvest(client, q, HeadingLexicon::defaults());
    CHECK(in_2016.size() == 10);
    for (const auto& r : in_2016) CHECK(r.year == 2016);
}

TEST_CASE("retryable failures are retried, persistent ones surface") {
    auto sim = testing::fixture_eutils();
    ManualClock clock;
    EntrezOptions opts;
    opts.max_retries = 3;
    EntrezClient client(sim, opts, clock);
    sim.fail_next(2);
    CHECK(client.resolve_field_journals("Anesthesiology").size() == 2);

    EntrezClient fresh(sim, opts, clock);
    sim.fail_next(4);
    CHECK_THROWS_AS(fresh.resolve_field_journals("Anesthesiology"), TransportError);
}

TEST_CASE("catalog cache avoids repeat catalog searches") {
    const auto dir = testing::scratch_dir("ingest_cache");
    auto sim = testing::fixture_eutils();
    ManualClock clock;
    EntrezOptions opts;
    opts.catalog_cache = dir / "catalog.json";
    {
        EntrezClient client(sim, opts, clock);
        client.resolve_field_journals("Anesthesiology");
    }
    const auto calls = sim.calls();
    EntrezClient again(sim, opts, clock);
    CHECK(again.resolve_field_journals("Anesthesiology").size() == 2);
    CHECK(sim.calls() == calls);
}

TEST_CASE("rate limiter never grants more than the ceiling in any one-second window") {
    for (std::size_t ceiling : {1u, 3u, 10u}) {
        ManualClock clock;
        RateLimiter limiter(ceiling, clock);
        std::vector<Clock::time_point> grants;
        Rng rng(ceiling);
        std::uniform_int_distribution<int> gap(0, 400);
        for (int i = 0; i < 200; ++i) {
            clock.advance(std::chrono::milliseconds(gap(rng)));
            limiter.acquire();
            grants.push_back(clock.now());
        }
        for (std::size_t i = ceiling; i < grants.size(); ++i)
            CHECK(grants[i] - grants[i - ceiling] >= std::chrono::seconds(1));
    }
    ManualClock clock;
    CHECK(EntrezOptions{}.effective_rate() == 3);
    EntrezOptions keyed;
    keyed.api_key = "k";
    CHECK(keyed.effective_rate() == 10);
    CHECK_THROWS_AS(RateLimiter(0, clock), ConfigError);
}

TEST_CASE("unknown replay requests fail without retry") {
    ReplayTransport replay(testing::fixture_path("eutils"));
    CHECK_THROWS_AS(replay.get("esearch.fcgi", {{"db", "pubmed"}, {"term", "nothing"}}), TransportError);
    try {
        replay.get("esearch.fcgi", {{"db", "pubmed"}});
    } catch (const TransportError& e) {
        CHECK_FALSE(e.retryable());
    }
}

TEST_CASE("committed E-utilities fixtures match a fresh recording") {
    const auto dir = testing::scratch_dir("ingest_record");
    const auto cmd = std::string(TRIALSENT_RECORDER) + " " + (dir / "eutils").string() + " > /dev/null";
    REQUIRE(std::system(cmd.c_str()) == 0);
    const auto committed = testing::fixture_path("eutils");
    CHECK(read_text(dir / "eutils" / "index.json") == read_text(committed / "index.json"));
    for (const auto& entry : std::filesystem::directory_iterator(dir / "eutils"))
        CHECK(read_text(entry.path()) == read_text(committed / entry.path().filename()));
}
