#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "trialsent/jsonl.hpp"

namespace trialsent::ingest {

struct YearRange {
    int from = 0;
    int to = 0;
};

/// One field-restricted clinical-trial search.
struct FieldQuery {
    std::string field_name;
    std::optional<YearRange> date_range;
    std::string publication_type = "Clinical Trial";
    std::size_t max_records = 1;

    /// Throws InputError when an invariant is broken.
    void validate() const;
};

/// Verbatim tagged-line MEDLINE payload for one citation.
struct RawMedlineRecord {
    std::string record_text;
};

struct Section {
    std::string heading;
    std::string text;
    bool operator==(const Section&) const = default;
};

struct AbstractRecord {
    std::string pmid;
    std::string title;
    std::string journal_id;
    std::string field;
    int year = 0;
    std::string abstract_text;
    bool is_structured = false;
    std::vector<Section> sections;

    bool operator==(const AbstractRecord&) const = default;
};

Json to_json(const AbstractRecord& record);
AbstractRecord record_from_json(const Json& row);

std::vector<AbstractRecord> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<AbstractRecord>& records);

/// Section headings recognised in abstract text. Matching is
/// case-insensitive; a heading counts only when followed by a colon and
/// placed at the start of the text or after sentence-ending punctuation.
struct HeadingLexicon {
    std::vector<std::string> headings;

    static HeadingLexicon defaults();
};

/// Splits a MEDLINE-format stream (records separated by blank lines).
std::vector<RawMedlineRecord> split_medline(const std::string& text);

/// Splits `abstract` at lexicon headings. Returns an empty list when no
/// heading is found.
std::vector<Section> split_sections(const std::string& abstract, const HeadingLexicon& lexicon);

/// Parses one record. Returns nullopt (and logs a warning) when the record
/// has no abstract; throws ParseError when the PMID is missing.
std::optional<AbstractRecord> parse_medline_record(const RawMedlineRecord& raw,
                                                   const HeadingLexicon& lexicon,
                                                   const std::string& field = {});

// ---------------------------------------------------------------------------
// Transport

using QueryParams = std::vector<std::pair<std::string, std::string>>;

/// GET against a named E-utilities endpoint ("esearch.fcgi", "efetch.fcgi").
/// Implementations throw TransportError on failure.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual std::string get(const std::string& endpoint, const QueryParams& params) = 0;
};

/// Live transport over HTTPS.
class EutilsHttpTransport final : public HttpTransport {
public:
    explicit EutilsHttpTransport(std::string host = "https://eutils.ncbi.nlm.nih.gov",
                                 std::string base_path = "/entrez/eutils/");
    std::string get(const std::string& endpoint, const QueryParams& params) override;

private:
    std::string host_;
    std::string base_path_;
};

/// Canonical request key: endpoint plus sorted params, credentials removed.
std::string request_key(const std::string& endpoint, const QueryParams& params);

/// Serves responses from a recorded fixture directory (index.json plus one
/// body file per request). Unknown requests raise a non-retryable error.
class ReplayTransport final : public HttpTransport {
public:
    explicit ReplayTransport(std::filesystem::path dir);
    std::string get(const std::string& endpoint, const QueryParams& params) override;
    std::size_t size() const { return responses_.size(); }

private:
    std::map<std::string, std::string> responses_;
};

/// Forwards to an inner transport and records every response to a fixture
/// directory readable by ReplayTransport.
class RecordingTransport final : public HttpTransport {
public:
    RecordingTransport(HttpTransport& inner, std::filesystem::path dir);
    ~RecordingTransport() override;
    std::string get(const std::string& endpoint, const QueryParams& params) override;
    void flush();

private:
    HttpTransport& inner_;
    std::filesystem::path dir_;
    std::mutex mutex_;
    std::map<std::string, Json> index_;
};

// ---------------------------------------------------------------------------
// Rate limiting

class Clock {
public:
    using time_point = std::chrono::steady_clock::time_point;
    virtual ~Clock() = default;
    virtual time_point now() const = 0;
    virtual void sleep_until(time_point t) = 0;
};

class SteadyClock final : public Clock {
public:
    time_point now() const override { return std::chrono::steady_clock::now(); }
    void sleep_until(time_point t) override;
};

/// Sliding-window gate shared by all fetch workers: at most `per_second`
/// acquisitions inside any one-second window.
class RateLimiter {
public:
    RateLimiter(std::size_t per_second, Clock& clock);
    void acquire();
    std::size_t ceiling() const { return per_second_; }

private:
    std::size_t per_second_;
    Clock& clock_;
    std::mutex mutex_;
    std::vector<Clock::time_point> recent_;  // ring of the last per_second_ grants
    std::size_t next_ = 0;
};

// ---------------------------------------------------------------------------
// Entrez client

struct EntrezOptions {
    std::optional<std::string> api_key;
    /// 0 selects the service default: 10/s with a key, 3/s without.
    std::size_t requests_per_second = 0;
    std::size_t max_retries = 3;
    std::chrono::milliseconds retry_backoff{500};
    std::size_t page_size = 500;
    std::size_t fetch_batch = 200;
    std::size_t workers = 2;
    std::string tool = "trialsent";
    std::optional<std::filesystem::path> catalog_cache;

    std::size_t effective_rate() const;
};

class EntrezClient {
public:
    EntrezClient(HttpTransport& transport, EntrezOptions options, Clock& clock);
    EntrezClient(HttpTransport& transport, EntrezOptions options);

    /// Journal identifiers whose catalog subject matches `field_name`.
    /// Unknown fields yield an empty set with a warning.
    std::set<std::string> resolve_field_journals(const std::string& field_name);

    /// Records for a field query, at most `query.max_records`.
    std::vector<RawMedlineRecord> fetch_records(const FieldQuery& query);

    /// The PubMed search term built for a query over the given journals.
    static std::string pubmed_term(const FieldQuery& query, const std::set<std::string>& journals);
    static std::string catalog_term(const std::string& field_name);

    const RateLimiter& limiter() const { return limiter_; }

private:
    struct SearchPage {
        std::size_t count = 0;
        std::vector<std::string> ids;
    };

    std::string request(const std::string& endpoint, QueryParams params);
    SearchPage search(const std::string& db, const std::string& term, std::size_t retstart,
                      std::size_t retmax);
    void load_catalog_cache();
    void store_catalog_cache();

    HttpTransport& transport_;
    EntrezOptions options_;
    SteadyClock default_clock_;
    Clock& clock_;
    RateLimiter limiter_;
    std::mutex cache_mutex_;
    std::map<std::string, std::set<std::string>> catalog_cache_;
};

/// Convenience: fetch, parse, tag with the field, drop records lacking an
/// abstract.
std::vector<AbstractRecord> harvest(EntrezClient& client, const FieldQuery& query,
                                    const HeadingLexicon& lexicon);

}  // namespace trialsent::ingest
