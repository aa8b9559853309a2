#include <httplib.h>

#include <algorithm>
#include <thread>

#include "trialsent/error.hpp"
#include "trialsent/ingest.hpp"

namespace trialsent::ingest {

namespace {

bool is_credential(const std::string& name) {
    return name == "api_key" || name == "tool" || name == "email";
}

}  // namespace

EutilsHttpTransport::EutilsHttpTransport(std::string host, std::string base_path)
    : host_(std::move(host)), base_path_(std::move(base_path)) {}

std::string EutilsHttpTransport::get(const std::string& endpoint, const QueryParams& params) {
    httplib::Client client(host_);
    client.set_connection_timeout(10);
    client.set_read_timeout(60);
    client.set_follow_location(true);
    httplib::Params query;
    for (const auto& [k, v] : params) query.emplace(k, v);
    auto result = client.Get(base_path_ + endpoint, query, httplib::Headers{});
    if (!result)
        throw TransportError("request to " + endpoint + " failed: " + httplib::to_string(result.error()),
                             true);
    const int status = result->status;
    if (status != 200) {
        const bool retryable = status == 429 || status >= 500;
        throw TransportError(endpoint + " returned HTTP " + std::to_string(status), retryable);
    }
    return result->body;
}

std::string request_key(const std::string& endpoint, const QueryParams& params) {
    QueryParams kept;
    for (const auto& p : params)
        if (!is_credential(p.first)) kept.push_back(p);
    std::sort(kept.begin(), kept.end());
    std::string key = endpoint;
    char sep = '?';
    for (const auto& [k, v] : kept) {
        key += sep;
        key += k;
        key += '=';
        key += v;
        sep = '&';
    }
    return key;
}

ReplayTransport::ReplayTransport(std::filesystem::path dir) {
    const auto index = read_json(dir / "index.json");
    for (const auto& entry : index.at("requests"))
        responses_[entry.at("key").get<std::string>()] =
            read_text(dir / entry.at("file").get<std::string>());
}

std::string ReplayTransport::get(const std::string& endpoint, const QueryParams& params) {
    const auto key = request_key(endpoint, params);
    const auto it = responses_.find(key);
    if (it == responses_.end())
        throw TransportError("no recorded response for " + key, false);
    return it->second;
}

RecordingTransport::RecordingTransport(HttpTransport& inner, std::filesystem::path dir)
    : inner_(inner), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

RecordingTransport::~RecordingTransport() {
    try {
        flush();
    } catch (...) {
    }
}

std::string RecordingTransport::get(const std::string& endpoint, const QueryParams& params) {
    auto body = inner_.get(endpoint, params);
    const auto key = request_key(endpoint, params);
    const auto file = sha256_hex(key).substr(0, 16) + ".txt";
    std::lock_guard lock(mutex_);
    write_text(dir_ / file, body);
    index_[key] = Json{{"key", key}, {"file", file}};
    return body;
}

void RecordingTransport::flush() {
    std::lock_guard lock(mutex_);
    Json requests = Json::array();
    for (const auto& [key, entry] : index_) requests.push_back(entry);
    write_json(dir_ / "index.json", Json{{"requests", std::move(requests)}});
}

void SteadyClock::sleep_until(time_point t) { std::this_thread::sleep_until(t); }

RateLimiter::RateLimiter(std::size_t per_second, Clock& clock)
    : per_second_(per_second), clock_(clock) {
    if (per_second_ == 0) throw ConfigError("rate limit must be positive");
}

void RateLimiter::acquire() {
    std::lock_guard lock(mutex_);
    auto now = clock_.now();
    if (recent_.size() == per_second_) {
        // The oldest grant in the window is the one we overwrite next.
        const auto earliest = recent_[next_] + std::chrono::seconds(1);
        if (now < earliest) {
            clock_.sleep_until(earliest);
            now = std::max(clock_.now(), earliest);
        }
        recent_[next_] = now;
    } else {
        recent_.push_back(now);
    }
    next_ = (next_ + 1) % per_second_;
}

}  // namespace trialsent::ingest
