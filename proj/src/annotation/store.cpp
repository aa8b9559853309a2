#include <algorithm>
#include <mutex>
#include <numeric>

#include <fcntl.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "trialsent/annotation.hpp"
#include "trialsent/error.hpp"
#include "trialsent/random.hpp"

namespace trialsent::annotation {

namespace {

std::string_view to_string(TaskStatus s) { return s == TaskStatus::Pending ? "PENDING" : "RATED"; }

std::string make_task_id(const std::string& rater, const std::string& pmid) {
    return sha256_hex(rater + '\n' + pmid).substr(0, 16);
}

std::uint64_t rater_stream(const std::string& rater) {
    return std::stoull(sha256_hex(rater).substr(0, 16), nullptr, 16);
}

}  // namespace

Json to_json(const AnnotationTask& task) {
    return Json{{"task_id", task.task_id},
                {"abstract_text", task.abstract_text},
                {"assigned_rater", task.assigned_rater},
                {"status", to_string(task.status)}};
}

Json to_json(const Progress& progress) {
    return Json{{"rated", progress.rated}, {"total", progress.total}, {"remaining", progress.total - progress.rated}};
}

AnnotationStore::AnnotationStore(const std::vector<ingest::AbstractRecord>& records,
                                 const std::vector<std::string>& raters, std::uint64_t seed,
                                 std::filesystem::path event_log)
    : log_path_(std::move(event_log)) {
    std::vector<const ingest::AbstractRecord*> sorted;
    for (const auto& r : records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->pmid < b->pmid; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i]->pmid == sorted[i - 1]->pmid) throw InputError("duplicate pmid " + sorted[i]->pmid);
    for (auto* r : sorted) texts_.push_back(r->abstract_text);

    for (const auto& rater : raters) {
        if (rater.empty()) throw ConfigError("annotation: empty rater id");
        if (queues_.count(rater)) throw ConfigError("annotation: duplicate rater " + rater);
        std::vector<std::size_t> order(sorted.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, rater_stream(rater)));
        std::shuffle(order.begin(), order.end(), rng);
        auto& queue = queues_[rater];
        for (auto idx : order) {
            const auto id = make_task_id(rater, sorted[idx]->pmid);
            queue.push_back(id);
            tasks_[id] = TaskState{rater, sorted[idx]->pmid, idx, TaskStatus::Pending};
        }
        rated_[rater] = 0;
    }

    if (std::filesystem::exists(log_path_)) {
        const auto text = read_text(log_path_);
        std::size_t line_no = 0, pos = 0;
        while (pos < text.size()) {
            auto nl = text.find('\n', pos);
            const bool complete = nl != std::string::npos;
            const auto line = text.substr(pos, complete ? nl - pos : std::string::npos);
            pos = complete ? nl + 1 : text.size();
            ++line_no;
            if (line.empty()) continue;
            if (!complete) {
                // a crash between write and newline leaves a torn tail
                spdlog::warn("annotation log {}: ignoring incomplete final line {}", log_path_.string(), line_no);
                break;
            }
            Json ev;
            try {
                ev = Json::parse(line);
                const auto task_id = ev.at("task_id").get<std::string>();
                const auto rater = ev.at("rater").get<std::string>();
                const auto label = parse_real_label(ev.at("label").get<std::string>());
                const auto it = tasks_.find(task_id);
                if (it == tasks_.end() || it->second.rater != rater || it->second.status == TaskStatus::Rated)
                    throw ParseError("event does not match a pending task");
                apply(task_id, rater, label);
            } catch (const std::exception& e) {
                throw ParseError("annotation log " + log_path_.string() + " line " + std::to_string(line_no) + ": " +
                                 e.what());
            }
        }
        // drop a torn tail so later appends start on a fresh line
        if (!text.empty() && text.back() != '\n') {
            const auto keep = text.rfind('\n');
            std::filesystem::resize_file(log_path_, keep == std::string::npos ? 0 : keep + 1);
        }
        spdlog::info("annotation log {}: replayed {} ratings", log_path_.string(), ratings_.size());
    }
    if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
    log_ = std::fopen(log_path_.c_str(), "ab");
    if (!log_) throw InputError("cannot open annotation log " + log_path_.string());
}

AnnotationStore::~AnnotationStore() {
    if (log_) std::fclose(log_);
}

void AnnotationStore::apply(const std::string& task_id, const std::string& rater, SentimentLabel label) {
    auto& task = tasks_.at(task_id);
    task.status = TaskStatus::Rated;
    ++rated_[rater];
    ratings_.push_back(corpus::RaterAnnotation{rater, task.pmid, label});
}

bool AnnotationStore::has_rater(const std::string& rater) const {
    std::shared_lock lock(mutex_);
    return queues_.count(rater) > 0;
}

std::optional<AnnotationTask> AnnotationStore::next_task(const std::string& rater) const {
    std::shared_lock lock(mutex_);
    const auto q = queues_.find(rater);
    if (q == queues_.end()) throw ApiError(401, "unknown_rater", "unknown rater " + rater);
    for (const auto& id : q->second) {
        const auto& task = tasks_.at(id);
        if (task.status == TaskStatus::Pending)
            return AnnotationTask{id, texts_[task.text_index], rater, TaskStatus::Pending};
    }
    return std::nullopt;
}

Progress AnnotationStore::progress(const std::string& rater) const {
    std::shared_lock lock(mutex_);
    const auto q = queues_.find(rater);
    if (q == queues_.end()) throw ApiError(401, "unknown_rater", "unknown rater " + rater);
    return Progress{rated_.at(rater), q->second.size()};
}

Progress AnnotationStore::submit(const std::string& rater, const std::string& task_id, SentimentLabel label,
                                 const std::string& submitted_at) {
    if (!is_real(label)) throw ApiError(400, "invalid_label", "label must be POSITIVE, NEGATIVE or NEUTRAL");
    std::unique_lock lock(mutex_);
    const auto q = queues_.find(rater);
    if (q == queues_.end()) throw ApiError(401, "unknown_rater", "unknown rater " + rater);
    const auto it = tasks_.find(task_id);
    if (it == tasks_.end()) throw ApiError(404, "unknown_task", "no task " + task_id);
    if (it->second.rater != rater) throw ApiError(403, "forbidden", "task " + task_id + " is not assigned to " + rater);
    if (it->second.status == TaskStatus::Rated)
        throw ApiError(409, "conflict", "task " + task_id + " has already been rated");

    const Json ev{{"event", "rating"},
                  {"task_id", task_id},
                  {"rater", rater},
                  {"pmid", it->second.pmid},
                  {"label", std::string(to_string(label))},
                  {"submitted_at", submitted_at}};
    const auto line = ev.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0 ||
        ::fsync(::fileno(log_)) != 0)
        throw ApiError(500, "storage_error", "could not persist the rating");
    apply(task_id, rater, label);
    return Progress{rated_.at(rater), q->second.size()};
}

std::vector<corpus::RaterAnnotation> AnnotationStore::export_annotations() const {
    std::shared_lock lock(mutex_);
    return ratings_;
}

std::vector<std::string> AnnotationStore::task_order(const std::string& rater) const {
    std::shared_lock lock(mutex_);
    const auto q = queues_.find(rater);
    if (q == queues_.end()) throw ApiError(401, "unknown_rater", "unknown rater " + rater);
    std::vector<std::string> pmids;
    for (const auto& id : q->second) pmids.push_back(tasks_.at(id).pmid);
    return pmids;
}

}  // namespace trialsent::annotation
