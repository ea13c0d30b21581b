#include "cadkit/service.hpp"

#include "cadkit/image.hpp"
#include "cadkit/llm.hpp"
#include "cadkit/render.hpp"
#include "cadkit/serialization.hpp"

#include <algorithm>
#include <condition_variable>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace cadkit::service {

namespace fs = std::filesystem;
using agent::SessionStatus;

struct Service::Entry {
    mutable std::mutex m;
    mutable std::condition_variable cv;
    std::string id;
    std::string created_at;
    fs::path dir;
    std::vector<std::string> attachments;
    agent::SessionState state;
    std::vector<Event> events;
    std::thread worker;
};

namespace {

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot read " + p.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const fs::path& p, const std::string& text) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) {
            throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        }
    }
    fs::rename(tmp, p);
}

void append_line(const fs::path& p, const std::string& line) {
    std::ofstream out(p, std::ios::binary | std::ios::app);
    out << line << '\n';
    if (!out) {
        throw Error(ErrorCode::Io, "cannot append to " + p.string());
    }
}

std::string new_id() {
    static std::mt19937_64 rng{std::random_device{}()};
    static std::mutex m;
    std::lock_guard lk(m);
    std::ostringstream ss;
    ss << std::hex;
    ss.width(16);
    ss.fill('0');
    ss << rng();
    return ss.str();
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool valid_name(const std::string& name) {
    if (name.empty() || name == "." || name == ".." || name.size() > 255) {
        return false;
    }
    return name.find_first_of("/\\") == std::string::npos && name.find('\0') == std::string::npos;
}

agent::Query query_for(const Service::Entry& e, std::string text) {
    agent::Query q;
    q.text = std::move(text);
    for (const auto& name : e.attachments) {
        const fs::path p = e.dir / "attachments" / name;
        q.attachments.push_back(agent::Attachment{agent::attachment_kind_for(p), p});
    }
    return q;
}

Json meta_json(const Service::Entry& e) {
    Json bindings = Json::object();
    for (const auto& [k, v] : e.state.bindings) {
        bindings[k] = v;
    }
    return Json{{"id", e.id},
                {"created_at", e.created_at},
                {"status", agent::status_name(e.state.status)},
                {"flagged", e.state.flagged},
                {"step_budget", e.state.step_budget},
                {"attachments", e.attachments},
                {"query", e.state.query.text},
                {"bindings", std::move(bindings)}};
}

void persist_meta(const Service::Entry& e) { write_atomic(e.dir / "session.json", meta_json(e).dump(2) + "\n"); }

void persist_document(const Service::Entry& e) {
    write_atomic(e.dir / "document.json", agent::document_to_json(e.state.document).dump(2) + "\n");
    write_atomic(e.dir / "document.sketch.json", to_document(e.state.document.sketch));
}

Json event_json(const Event& ev) { return Json{{"id", ev.id}, {"type", ev.type}, {"data", ev.data}}; }

void push_event(Service::Entry& e, std::string type, Json data) {
    Event ev{e.events.size() + 1, std::move(type), std::move(data)};
    append_line(e.dir / "events.jsonl", event_json(ev).dump());
    e.events.push_back(std::move(ev));
    e.cv.notify_all();
}

Json status_event(SessionStatus s) { return Json{{"status", agent::status_name(s)}}; }

void rebuild_context(agent::SessionState& state) {
    state.context.clear();
    for (const auto& rec : state.transcript) {
        if (rec.action || rec.reply) {
            agent::ContextBlock block{rec.step, rec.feedback};
            for (auto& a : block.feedback.artifacts) {
                const fs::path p = state.artifact_dir / a.path;
                if (a.kind == "image" && fs::is_regular_file(p)) {
                    try {
                        a.image = std::make_shared<const GrayImage>(read_png(p));
                    } catch (const Error&) {
                    }
                }
            }
            state.context.insert(state.context.begin(), std::move(block));
        }
    }
}

} // namespace

std::unique_ptr<agent::Planner> default_planner(const std::string& choice) {
    constexpr std::string_view scripted = "scripted:";
    if (choice.rfind(scripted, 0) == 0) {
        const fs::path path = choice.substr(scripted.size());
        return std::make_unique<agent::ScriptedPlanner>(agent::ScriptedPlanner::from_file(path));
    }
    if (choice == "llm") {
        return std::make_unique<agent::LlmPlanner>(agent::LlmConfig::from_env());
    }
    throw Error(ErrorCode::PlannerConfig, "planner must be 'llm' or 'scripted:<fixture>', got '" + choice + "'");
}

Service::Service(ServiceConfig config) : config_(std::move(config)), tools_(agent::standard_registry()) {
    if (!config_.planner_factory) {
        config_.planner_factory = default_planner;
    }
    fs::create_directories(config_.data_dir / "sessions");
    load_existing();
}

Service::~Service() { shutdown(); }

void Service::shutdown() {
    std::vector<std::shared_ptr<Entry>> entries;
    {
        std::lock_guard lk(mutex_);
        stopping_ = true;
        for (const auto& [id, e] : sessions_) {
            entries.push_back(e);
        }
    }
    for (const auto& e : entries) {
        e->cv.notify_all();
        if (e->worker.joinable()) {
            e->worker.join();
        }
    }
}

void Service::load_existing() {
    for (const auto& dirent : fs::directory_iterator(config_.data_dir / "sessions")) {
        const fs::path meta_path = dirent.path() / "session.json";
        if (!dirent.is_directory() || !fs::is_regular_file(meta_path)) {
            continue;
        }
        const Json meta = Json::parse(read_text(meta_path));
        auto e = std::make_shared<Entry>();
        e->id = meta.at("id").get<std::string>();
        e->created_at = meta.at("created_at").get<std::string>();
        e->dir = dirent.path();
        e->attachments = meta.at("attachments").get<std::vector<std::string>>();
        try {
            e->state = agent::start_session(query_for(*e, meta.value("query", "")), meta.value("step_budget", 16));
        } catch (const Error&) {
            e->state = agent::SessionState{};
            e->state.query = query_for(*e, meta.value("query", ""));
        }
        e->state.artifact_dir = e->dir / "artifacts";
        if (fs::is_regular_file(e->dir / "document.json")) {
            e->state.document = agent::document_from_json(Json::parse(read_text(e->dir / "document.json")));
        }
        if (fs::is_regular_file(e->dir / "transcript.jsonl")) {
            e->state.transcript = agent::parse_transcript_jsonl(read_text(e->dir / "transcript.jsonl"));
        }
        rebuild_context(e->state);
        const Json bindings = meta.value("bindings", Json::object());
        for (const auto& [k, v] : bindings.items()) {
            e->state.bindings[k] = v;
        }
        e->state.flagged = meta.value("flagged", false);
        const auto status = agent::parse_status(meta.at("status").get<std::string>());
        e->state.status = status.value_or(SessionStatus::Failed);
        if (fs::is_regular_file(e->dir / "events.jsonl")) {
            std::istringstream lines(read_text(e->dir / "events.jsonl"));
            std::string line;
            while (std::getline(lines, line)) {
                if (line.empty()) {
                    continue;
                }
                const Json j = Json::parse(line);
                e->events.push_back(Event{j.at("id").get<std::uint64_t>(), j.at("type").get<std::string>(), j.at("data")});
            }
        }
        if (e->state.status == SessionStatus::Running) {
            e->state.status = SessionStatus::Failed;
            push_event(*e, "status", Json{{"status", "Failed"}, {"reason", "interrupted"}});
            persist_meta(*e);
        }
        sessions_.emplace(e->id, std::move(e));
    }
}

std::shared_ptr<Service::Entry> Service::find(const std::string& id) const {
    std::lock_guard lk(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
    }
    return it->second;
}

std::string Service::create_session(const std::vector<UploadedFile>& files) {
    for (const auto& f : files) {
        if (!valid_name(f.name)) {
            throw Error(ErrorCode::InvalidAttachment, "bad attachment name '" + f.name + "'");
        }
        if (f.content.size() > kMaxAttachmentBytes) {
            throw Error(ErrorCode::AttachmentTooLarge,
                        f.name + " is " + std::to_string(f.content.size()) + " bytes, the limit is " +
                            std::to_string(kMaxAttachmentBytes));
        }
    }
    auto e = std::make_shared<Entry>();
    e->id = new_id();
    e->created_at = utc_now();
    e->dir = config_.data_dir / "sessions" / e->id;
    const fs::path staging = config_.data_dir / "sessions" / ("." + e->id + ".staging");
    fs::create_directories(staging / "attachments");
    try {
        for (const auto& f : files) {
            if (std::find(e->attachments.begin(), e->attachments.end(), f.name) != e->attachments.end()) {
                throw Error(ErrorCode::InvalidAttachment, "duplicate attachment name '" + f.name + "'");
            }
            write_atomic(staging / "attachments" / f.name, f.content);
            e->attachments.push_back(f.name);
        }
        Entry probe;
        probe.dir = staging;
        probe.attachments = e->attachments;
        agent::start_session(query_for(probe, ""), config_.step_budget);
    } catch (...) {
        fs::remove_all(staging);
        throw;
    }
    fs::rename(staging, e->dir);
    e->state = agent::start_session(query_for(*e, ""), config_.step_budget);
    e->state.artifact_dir = e->dir / "artifacts";
    persist_document(*e);
    persist_meta(*e);
    std::lock_guard lk(mutex_);
    sessions_.emplace(e->id, e);
    return e->id;
}

void Service::post_message(const std::string& id, const std::string& text, const std::string& planner_choice) {
    const auto e = find(id);
    std::unique_lock lk(e->m);
    if (e->state.status == SessionStatus::Running) {
        throw Error(ErrorCode::SessionBusy, "session '" + id + "' is already running");
    }
    {
        std::lock_guard g(mutex_);
        if (stopping_) {
            throw Error(ErrorCode::SessionBusy, "service is shutting down");
        }
    }
    std::unique_ptr<agent::Planner> planner = config_.planner_factory(planner_choice);
    if (e->worker.joinable()) {
        e->worker.join();
    }
    agent::SessionState working = e->state;
    working.query = query_for(*e, text);
    working.step_budget = config_.step_budget;
    e->state.query.text = text;
    e->state.status = SessionStatus::Running;
    persist_meta(*e);
    e->worker = std::thread(&Service::run, this, e, std::move(working), std::move(planner));
}

void Service::run(std::shared_ptr<Entry> e, agent::SessionState working, std::unique_ptr<agent::Planner> planner) {
    std::string failure;
    try {
        agent::run_session(working, *planner, tools_, [&](const agent::StepRecord& rec) {
            std::lock_guard lk(e->m);
            e->state.document = working.document;
            e->state.transcript.push_back(rec);
            e->state.context = working.context;
            e->state.bindings = working.bindings;
            e->state.flagged = working.flagged;
            append_line(e->dir / "transcript.jsonl", agent::step_to_json(rec).dump());
            persist_document(*e);
            push_event(*e, "step", agent::step_to_json(rec));
        });
    } catch (const std::exception& ex) {
        failure = ex.what();
        working.status = SessionStatus::Failed;
    }
    std::lock_guard lk(e->m);
    e->state = std::move(working);
    Json data = status_event(e->state.status);
    if (!failure.empty()) {
        data["reason"] = failure;
    }
    persist_meta(*e);
    push_event(*e, "status", std::move(data));
}

Json Service::state(const std::string& id) const {
    const auto e = find(id);
    std::lock_guard lk(e->m);
    Json transcript = Json::array();
    for (const auto& rec : e->state.transcript) {
        transcript.push_back(agent::step_to_json(rec));
    }
    return Json{{"session_id", e->id},
                {"created_at", e->created_at},
                {"status", agent::status_name(e->state.status)},
                {"flagged", e->state.flagged},
                {"attachments", e->attachments},
                {"document", agent::document_to_json(e->state.document)},
                {"transcript", std::move(transcript)}};
}

std::string Service::render_svg(const std::string& id) const {
    const auto e = find(id);
    SketchGraph sketch;
    {
        std::lock_guard lk(e->m);
        sketch = e->state.document.sketch;
    }
    return render_sketch_svg(sketch);
}

SessionStatus Service::status(const std::string& id) const {
    const auto e = find(id);
    std::lock_guard lk(e->m);
    return e->state.status;
}

EventBatch Service::events_after(const std::string& id, std::uint64_t last_id, std::chrono::milliseconds wait) const {
    const auto e = find(id);
    std::unique_lock lk(e->m);
    auto ready = [&] {
        return e->events.size() > last_id || e->state.status != SessionStatus::Running;
    };
    if (!ready()) {
        e->cv.wait_for(lk, wait, ready);
    }
    EventBatch batch;
    for (std::size_t i = static_cast<std::size_t>(last_id); i < e->events.size(); ++i) {
        batch.events.push_back(e->events[i]);
    }
    batch.finished = e->state.status != SessionStatus::Running && batch.events.empty();
    if (!batch.finished) {
        std::lock_guard g(mutex_);
        batch.finished = stopping_ && batch.events.empty();
    }
    return batch;
}

void Service::wait_until_settled(const std::string& id) const {
    const auto e = find(id);
    std::unique_lock lk(e->m);
    e->cv.wait(lk, [&] { return e->state.status != SessionStatus::Running; });
}

std::vector<std::string> Service::session_ids() const {
    std::lock_guard lk(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, e] : sessions_) {
        ids.push_back(id);
    }
    return ids;
}

fs::path Service::artifact_path(const std::string& id, const std::string& name) const {
    const auto e = find(id);
    const fs::path p = e->dir / "artifacts" / name;
    if (!valid_name(name) || !fs::is_regular_file(p)) {
        throw Error(ErrorCode::Io, "no artifact '" + name + "'");
    }
    return p;
}

int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::UnknownSession: return 404;
    case ErrorCode::SessionBusy: return 409;
    case ErrorCode::AttachmentTooLarge: return 413;
    case ErrorCode::Io: return 404;
    case ErrorCode::TransportError: return 502;
    case ErrorCode::InvariantViolation: return 500;
    default: return 400;
    }
}

Json error_body(const Error& e) { return Json{{"code", error_code_name(e.code())}, {"message", e.what()}}; }

} // namespace cadkit::service
