#include <chrono>
#include <ctime>
#include <set>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "trialsent/annotation.hpp"
#include "trialsent/error.hpp"

namespace trialsent::annotation {

namespace {

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    res.status = status;
    res.set_content(Json{{"code", code}, {"message", message}}.dump(), "application/json");
}

void send_json(httplib::Response& res, const Json& body) {
    res.status = 200;
    res.set_content(body.dump(), "application/json");
}

std::string bearer_token(const httplib::Request& req) {
    const auto header = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (header.size() <= prefix.size() || header.compare(0, prefix.size(), prefix) != 0) return {};
    return header.substr(prefix.size());
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

Json default_rubric() {
    return Json{{"POSITIVE", "The conclusion reports that the intervention met its goal or was beneficial."},
                {"NEGATIVE", "The conclusion reports that the intervention failed, was harmful or inferior."},
                {"NEUTRAL", "The conclusion reports no difference, mixed findings or no judgement of the intervention."}};
}

void ServiceConfig::validate() const {
    if (raters.empty()) throw ConfigError("serve: config.raters must list at least one rater");
    std::set<std::string> ids, tokens;
    for (const auto& r : raters) {
        if (r.id.empty()) throw ConfigError("serve: config.raters[].id must be non-empty");
        if (r.token.empty()) throw ConfigError("serve: rater " + r.id + " has an empty token");
        if (!ids.insert(r.id).second) throw ConfigError("serve: duplicate rater id " + r.id);
        if (!tokens.insert(r.token).second) throw ConfigError("serve: raters must have distinct tokens");
    }
    if (admin_token.empty()) throw ConfigError("serve: config.admin_token must be non-empty");
    if (tokens.count(admin_token)) throw ConfigError("serve: admin_token must differ from every rater token");
    if (corpus.empty()) throw ConfigError("serve: config.corpus is required");
    if (event_log.empty()) throw ConfigError("serve: config.event_log is required");
}

ServiceConfig ServiceConfig::from_json(const Json& doc, const std::filesystem::path& base_dir) {
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    ServiceConfig c;
    try {
        for (const auto& r : doc.at("raters")) c.raters.push_back({r.at("id").get<std::string>(), r.at("token").get<std::string>()});
        c.admin_token = doc.at("admin_token").get<std::string>();
        c.seed = doc.value("seed", std::uint64_t{0});
        c.corpus = resolve(doc.at("corpus").get<std::string>());
        c.event_log = resolve(doc.at("event_log").get<std::string>());
        if (doc.contains("static_dir")) c.static_dir = resolve(doc.at("static_dir").get<std::string>());
        c.rubric = doc.value("rubric", default_rubric());
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("serve config: ") + e.what());
    }
    c.validate();
    return c;
}

AnnotationServer::AnnotationServer(AnnotationStore& store, ServiceConfig config)
    : store_(store), config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
    for (const auto& r : config_.raters) token_to_rater_[r.token] = r.id;
    install_routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::install_routes() {
    auto& srv = *server_;

    // Resolves the caller; the rater query parameter, when given, must name them.
    auto authenticate = [this](const httplib::Request& req) -> std::string {
        const auto token = bearer_token(req);
        const auto it = token_to_rater_.find(token);
        if (token.empty() || it == token_to_rater_.end())
            throw ApiError(401, "unauthorized", "missing or unknown bearer token");
        if (req.has_param("rater") && req.get_param_value("rater") != it->second)
            throw ApiError(403, "forbidden", "token does not belong to rater " + req.get_param_value("rater"));
        return it->second;
    };

    auto guarded = [](auto handler) {
        return [handler](const httplib::Request& req, httplib::Response& res) {
            try {
                handler(req, res);
            } catch (const ApiError& e) {
                send_error(res, e.status(), e.code(), e.what());
            } catch (const std::exception& e) {
                spdlog::error("annotation api: {}", e.what());
                send_error(res, 500, "internal", "internal error");
            }
        };
    };

    srv.Get("/api/tasks/next", guarded([this, authenticate](const httplib::Request& req, httplib::Response& res) {
        const auto rater = authenticate(req);
        const auto task = store_.next_task(rater);
        send_json(res, Json{{"task", task ? to_json(*task) : Json(nullptr)},
                            {"progress", to_json(store_.progress(rater))}});
    }));

    srv.Post("/api/ratings", guarded([this, authenticate](const httplib::Request& req, httplib::Response& res) {
        const auto rater = authenticate(req);
        Json body;
        try {
            body = Json::parse(req.body);
        } catch (const Json::exception&) {
            throw ApiError(400, "invalid_json", "request body is not JSON");
        }
        if (!body.is_object() || !body.contains("task_id") || !body["task_id"].is_string() ||
            !body.contains("label") || !body["label"].is_string())
            throw ApiError(400, "invalid_request", "body must be {\"task_id\": string, \"label\": string}");
        SentimentLabel label;
        try {
            label = parse_real_label(body["label"].get<std::string>());
        } catch (const std::exception&) {
            throw ApiError(400, "invalid_label", "label must be POSITIVE, NEGATIVE or NEUTRAL");
        }
        const auto progress = store_.submit(rater, body["task_id"].get<std::string>(), label, utc_now());
        send_json(res, Json{{"accepted", true}, {"progress", to_json(progress)}});
    }));

    srv.Get("/api/progress", guarded([this, authenticate](const httplib::Request& req, httplib::Response& res) {
        send_json(res, to_json(store_.progress(authenticate(req))));
    }));

    srv.Get("/api/rubric", guarded([this, authenticate](const httplib::Request& req, httplib::Response& res) {
        authenticate(req);
        send_json(res, config_.rubric);
    }));

    srv.Get("/api/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
        if (bearer_token(req) != config_.admin_token) throw ApiError(401, "unauthorized", "admin token required");
        std::string body;
        for (const auto& a : store_.export_annotations()) body += corpus::to_json(a).dump() + "\n";
        res.status = 200;
        res.set_content(body, "application/x-ndjson");
    }));

    if (config_.static_dir && !srv.set_mount_point("/", config_.static_dir->string()))
        throw ConfigError("serve: static_dir " + config_.static_dir->string() + " is not a directory");
}

int AnnotationServer::start(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw TransportError("cannot bind " + host + ":" + std::to_string(port), false);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void AnnotationServer::listen(const std::string& host, int port) {
    if (!server_->bind_to_port(host, port)) throw TransportError("cannot bind " + host + ":" + std::to_string(port), false);
    spdlog::info("annotation api listening on {}:{}", host, port);
    server_->listen_after_bind();
}

void AnnotationServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace trialsent::annotation
