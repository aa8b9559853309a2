#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "trialsent/corpus.hpp"
#include "trialsent/error.hpp"
#include "trialsent/ingest.hpp"

namespace httplib {
class Server;
}

namespace trialsent::annotation {

/// Failure carried back to HTTP clients as {code, message}.
class ApiError : public Error {
public:
    ApiError(int status, std::string code, const std::string& message)
        : Error(message), status_(status), code_(std::move(code)) {}
    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }

private:
    int status_;
    std::string code_;
};

enum class TaskStatus { Pending, Rated };

struct AnnotationTask {
    std::string task_id;
    std::string abstract_text;
    std::string assigned_rater;
    TaskStatus status = TaskStatus::Pending;
};

Json to_json(const AnnotationTask& task);

struct Progress {
    std::size_t rated = 0;
    std::size_t total = 0;
};

Json to_json(const Progress& progress);

struct RaterAccount {
    std::string id;
    std::string token;
};

struct ServiceConfig {
    std::vector<RaterAccount> raters;
    std::string admin_token;
    std::uint64_t seed = 0;
    std::filesystem::path corpus;     // AbstractRecord JSONL
    std::filesystem::path event_log;  // append-only ratings log
    std::optional<std::filesystem::path> static_dir;
    Json rubric = Json::object();     // label -> definition shown to raters

    void validate() const;
    static ServiceConfig from_json(const Json& doc, const std::filesystem::path& base_dir = {});
};

/// Default label definitions shown to raters.
Json default_rubric();

/// Per-rater task queues backed by an append-only event log that is
/// replayed on construction. Reads share a lock; submissions take it
/// exclusively and append one line before updating memory.
class AnnotationStore {
public:
    AnnotationStore(const std::vector<ingest::AbstractRecord>& records, const std::vector<std::string>& raters,
                    std::uint64_t seed, std::filesystem::path event_log);
    ~AnnotationStore();

    AnnotationStore(const AnnotationStore&) = delete;
    AnnotationStore& operator=(const AnnotationStore&) = delete;

    bool has_rater(const std::string& rater) const;
    /// First pending task in the rater's fixed order, or none when done.
    std::optional<AnnotationTask> next_task(const std::string& rater) const;
    Progress progress(const std::string& rater) const;
    /// Records a rating; throws ApiError on an unknown, foreign or already
    /// rated task.
    Progress submit(const std::string& rater, const std::string& task_id, SentimentLabel label,
                    const std::string& submitted_at);
    /// Ratings in submission order.
    std::vector<corpus::RaterAnnotation> export_annotations() const;

    /// Pmids in the rater's fixed task order, rated or not.
    std::vector<std::string> task_order(const std::string& rater) const;

private:
    struct TaskState {
        std::string rater;
        std::string pmid;
        std::size_t text_index = 0;
        TaskStatus status = TaskStatus::Pending;
    };

    void apply(const std::string& task_id, const std::string& rater, SentimentLabel label);

    mutable std::shared_mutex mutex_;
    std::vector<std::string> texts_;
    std::map<std::string, std::vector<std::string>> queues_;  // rater -> task ids
    std::map<std::string, TaskState> tasks_;
    std::map<std::string, std::size_t> rated_;
    std::vector<corpus::RaterAnnotation> ratings_;
    std::filesystem::path log_path_;
    std::FILE* log_ = nullptr;
};

/// HTTP front end. Rater endpoints take "Authorization: Bearer <token>";
/// the export endpoint needs the admin token.
class AnnotationServer {
public:
    AnnotationServer(AnnotationStore& store, ServiceConfig config);
    ~AnnotationServer();

    /// Binds and serves on a background thread; returns the bound port
    /// (pass 0 for an ephemeral one).
    int start(const std::string& host, int port);
    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

private:
    void install_routes();

    AnnotationStore& store_;
    ServiceConfig config_;
    std::map<std::string, std::string> token_to_rater_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace trialsent::annotation
