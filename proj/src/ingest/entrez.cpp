#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include <spdlog/spdlog.h>

#include "trialsent/error.hpp"
#include "trialsent/ingest.hpp"

namespace trialsent::ingest {

namespace {

// Catalog UIDs drop the leading zeros that MEDLINE JID values keep.
std::string normalize_journal_id(std::string id) {
    const bool numeric = !id.empty() && std::all_of(id.begin(), id.end(), ::isdigit);
    if (numeric && id.size() < 7) id.insert(0, 7 - id.size(), '0');
    return id;
}

}  // namespace

std::size_t EntrezOptions::effective_rate() const {
    if (requests_per_second > 0) return requests_per_second;
    return api_key ? 10 : 3;
}

EntrezClient::EntrezClient(HttpTransport& transport, EntrezOptions options, Clock& clock)
    : transport_(transport),
      options_(std::move(options)),
      clock_(clock),
      limiter_(options_.effective_rate(), clock_) {
    if (options_.page_size == 0 || options_.fetch_batch == 0 || options_.workers == 0)
        throw ConfigError("entrez options: page_size, fetch_batch and workers must be positive");
    load_catalog_cache();
}

EntrezClient::EntrezClient(HttpTransport& transport, EntrezOptions options)
    : EntrezClient(transport, std::move(options), default_clock_) {}

std::string EntrezClient::catalog_term(const std::string& field_name) {
    return "\"" + field_name + "\"[st] AND ncbijournals[filter]";
}

std::string EntrezClient::pubmed_term(const FieldQuery& query,
                                      const std::set<std::string>& journals) {
    std::string term = "(";
    bool first = true;
    for (const auto& jid : journals) {
        if (!first) term += " OR ";
        term += jid + "[jid]";
        first = false;
    }
    term += ") AND \"" + query.publication_type + "\"[pt]";
    if (query.date_range)
        term += " AND " + std::to_string(query.date_range->from) + ":" +
                std::to_string(query.date_range->to) + "[dp]";
    return term;
}

std::string EntrezClient::request(const std::string& endpoint, QueryParams params) {
    params.emplace_back("tool", options_.tool);
    if (options_.api_key) params.emplace_back("api_key", *options_.api_key);
    for (std::size_t attempt = 0;; ++attempt) {
        limiter_.acquire();
        try {
            return transport_.get(endpoint, params);
        } catch (const TransportError& e) {
            if (!e.retryable() || attempt >= options_.max_retries) {
                throw TransportError(std::string(e.what()) + " (after " +
                                         std::to_string(attempt + 1) + " attempt(s))",
                                     false);
            }
            spdlog::warn("{}; retrying ({}/{})", e.what(), attempt + 1, options_.max_retries);
            clock_.sleep_until(clock_.now() + options_.retry_backoff * (1 << attempt));
        }
    }
}

EntrezClient::SearchPage EntrezClient::search(const std::string& db, const std::string& term,
                                              std::size_t retstart, std::size_t retmax) {
    const auto body = request("esearch.fcgi", {{"db", db},
                                               {"term", term},
                                               {"retmode", "json"},
                                               {"retstart", std::to_string(retstart)},
                                               {"retmax", std::to_string(retmax)}});
    try {
        const auto doc = Json::parse(body).at("esearchresult");
        SearchPage page;
        page.count = std::stoul(doc.at("count").get<std::string>());
        for (const auto& id : doc.at("idlist")) page.ids.push_back(id.get<std::string>());
        return page;
    } catch (const std::exception& e) {
        throw ParseError("malformed esearch response: " + std::string(e.what()));
    }
}

void EntrezClient::load_catalog_cache() {
    if (!options_.catalog_cache || !std::filesystem::exists(*options_.catalog_cache)) return;
    const auto doc = read_json(*options_.catalog_cache);
    for (const auto& [field, ids] : doc.items())
        catalog_cache_[field] = ids.get<std::set<std::string>>();
}

void EntrezClient::store_catalog_cache() {
    if (!options_.catalog_cache) return;
    Json doc = Json::object();
    for (const auto& [field, ids] : catalog_cache_) doc[field] = ids;
    write_json(*options_.catalog_cache, doc);
}

std::set<std::string> EntrezClient::resolve_field_journals(const std::string& field_name) {
    if (field_name.empty()) throw InputError("resolve_field_journals: empty field name");
    {
        std::lock_guard lock(cache_mutex_);
        if (const auto it = catalog_cache_.find(field_name); it != catalog_cache_.end())
            return it->second;
    }
    std::set<std::string> journals;
    const auto term = catalog_term(field_name);
    std::size_t retstart = 0;
    for (;;) {
        auto page = search("nlmcatalog", term, retstart, options_.page_size);
        for (auto& id : page.ids) journals.insert(normalize_journal_id(std::move(id)));
        retstart += page.ids.size();
        if (page.ids.empty() || retstart >= page.count) break;
    }
    if (journals.empty()) spdlog::warn("no catalog journals matched field '{}'", field_name);
    std::lock_guard lock(cache_mutex_);
    catalog_cache_[field_name] = journals;
    store_catalog_cache();
    return journals;
}

std::vector<RawMedlineRecord> EntrezClient::fetch_records(const FieldQuery& query) {
    query.validate();
    const auto journals = resolve_field_journals(query.field_name);
    if (journals.empty()) return {};

    const auto term = pubmed_term(query, journals);
    std::vector<std::string> ids;
    while (ids.size() < query.max_records) {
        const auto want = std::min(options_.page_size, query.max_records - ids.size());
        auto page = search("pubmed", term, ids.size(), want);
        if (page.ids.empty()) break;
        for (auto& id : page.ids) {
            if (ids.size() == query.max_records) break;
            ids.push_back(std::move(id));
        }
        if (ids.size() >= page.count) break;
    }
    if (ids.empty()) return {};

    std::vector<std::vector<std::string>> batches;
    for (std::size_t i = 0; i < ids.size(); i += options_.fetch_batch)
        batches.emplace_back(ids.begin() + i,
                             ids.begin() + std::min(ids.size(), i + options_.fetch_batch));

    // Workers pull batches; results land in their batch slot so output order
    // does not depend on scheduling.
    std::vector<std::string> bodies(batches.size());
    std::vector<std::exception_ptr> errors(batches.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t b = next++; b < batches.size(); b = next++) {
            std::string joined;
            for (const auto& id : batches[b]) {
                if (!joined.empty()) joined += ',';
                joined += id;
            }
            try {
                bodies[b] = request("efetch.fcgi", {{"db", "pubmed"},
                                                    {"id", joined},
                                                    {"rettype", "medline"},
                                                    {"retmode", "text"}});
            } catch (...) {
                errors[b] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const auto n = std::min(options_.workers, batches.size());
        for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<RawMedlineRecord> records;
    for (const auto& body : bodies)
        for (auto& r : split_medline(body)) records.push_back(std::move(r));
    if (records.size() > query.max_records) records.resize(query.max_records);
    return records;
}

std::vector<AbstractRecord> harvest(EntrezClient& client, const FieldQuery& query,
                                    const HeadingLexicon& lexicon) {
    std::vector<AbstractRecord> out;
    for (const auto& raw : client.fetch_records(query))
        if (auto rec = parse_medline_record(raw, lexicon, query.field_name)) out.push_back(*rec);
    return out;
}

}  // namespace trialsent::ingest
