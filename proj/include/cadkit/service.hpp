#pragma once

#include "cadkit/agent.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace cadkit::service {

using agent::Json;

inline constexpr std::size_t kMaxAttachmentBytes = 16u * 1024u * 1024u;

struct UploadedFile {
    std::string name;
    std::string content;
};

/// Stream entry. Ids start at 1 and are gapless per session. Types are
/// "step" (data = step record) and "status" (data = {status}).
struct Event {
    std::uint64_t id = 0;
    std::string type;
    Json data;
};

struct EventBatch {
    std::vector<Event> events;
    /// No run in flight and nothing left after the requested id.
    bool finished = false;
};

/// Builds the planner for a message; throws PlannerConfig.
using PlannerFactory = std::function<std::unique_ptr<agent::Planner>(const std::string& choice)>;

/// "scripted:<fixture path>" or "llm" (configured from LLM_* variables).
std::unique_ptr<agent::Planner> default_planner(const std::string& choice);

struct ServiceConfig {
    std::filesystem::path data_dir = "data";
    int step_budget = agent::kDefaultStepBudget;
    PlannerFactory planner_factory = default_planner;
};

/// Sessions kept in memory and mirrored to data_dir/sessions/<id>/:
/// session.json, transcript.jsonl, events.jsonl, document.json (sketch and
/// solid), document.sketch.json, attachments/
/// and artifacts/. Sessions found there are loaded on construction.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Throws InvalidAttachment or AttachmentTooLarge; nothing is kept then.
    std::string create_session(const std::vector<UploadedFile>& files);
    /// Starts a run in the background. Throws UnknownSession, SessionBusy or
    /// PlannerConfig before any step runs.
    void post_message(const std::string& id, const std::string& text, const std::string& planner);

    /// {session_id, created_at, status, flagged, document, transcript}.
    Json state(const std::string& id) const;
    std::string render_svg(const std::string& id) const;
    agent::SessionStatus status(const std::string& id) const;
    /// Events with id > last_id. Waits up to `wait` when there are none yet
    /// and a run is in flight.
    EventBatch events_after(const std::string& id, std::uint64_t last_id, std::chrono::milliseconds wait) const;
    /// Blocks until no run is in flight.
    void wait_until_settled(const std::string& id) const;
    std::vector<std::string> session_ids() const;
    /// Path of a stored artifact; throws UnknownSession or Io.
    std::filesystem::path artifact_path(const std::string& id, const std::string& name) const;

    /// Stops accepting work and joins running sessions.
    void shutdown();

    struct Entry;

private:

    ServiceConfig config_;
    agent::ToolRegistry tools_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    bool stopping_ = false;

    std::shared_ptr<Entry> find(const std::string& id) const;
    void load_existing();
    void run(std::shared_ptr<Entry> entry, agent::SessionState working, std::unique_ptr<agent::Planner> planner);
};

/// HTTP status for an error code.
int http_status(ErrorCode code);
/// {code, message}
Json error_body(const Error& e);

/// JSON/SSE front end over a Service.
class HttpServer {
public:
    explicit HttpServer(Service& service);
    ~HttpServer();

    /// Returns the bound port (an ephemeral one when `port` is 0).
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void listen();
    void wait_until_ready() const;
    void stop();

private:
    Service& service_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace cadkit::service
