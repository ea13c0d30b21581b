#include "cadkit/agent.hpp"
#include "cadkit/serialization.hpp"

#include <set>

namespace cadkit::agent {

std::string_view attachment_kind_name(AttachmentKind k) {
    switch (k) {
    case AttachmentKind::Sketch: return "sketch";
    case AttachmentKind::Solid: return "solid";
    case AttachmentKind::Mesh: return "mesh";
    case AttachmentKind::Image: return "image";
    case AttachmentKind::File: return "file";
    }
    return "file";
}

AttachmentKind attachment_kind_for(const std::filesystem::path& path) {
    const std::string name = path.filename().string();
    auto ends_with = [&](std::string_view suffix) {
        return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".sketch.json")) {
        return AttachmentKind::Sketch;
    }
    if (ends_with(".solid.json")) {
        return AttachmentKind::Solid;
    }
    if (ends_with(".obj") || ends_with(".stl")) {
        return AttachmentKind::Mesh;
    }
    if (ends_with(".png") || ends_with(".pgm")) {
        return AttachmentKind::Image;
    }
    return AttachmentKind::File;
}

std::string_view status_name(SessionStatus s) {
    switch (s) {
    case SessionStatus::Idle: return "Idle";
    case SessionStatus::Running: return "Running";
    case SessionStatus::Terminated: return "Terminated";
    case SessionStatus::BudgetExceeded: return "BudgetExceeded";
    case SessionStatus::Failed: return "Failed";
    }
    return "Idle";
}

std::optional<SessionStatus> parse_status(std::string_view name) {
    for (auto s : {SessionStatus::Idle, SessionStatus::Running, SessionStatus::Terminated,
                   SessionStatus::BudgetExceeded, SessionStatus::Failed}) {
        if (status_name(s) == name) {
            return s;
        }
    }
    return std::nullopt;
}

SessionState start_session(Query query, int step_budget) {
    SessionState state;
    state.step_budget = step_budget;
    for (const auto& a : query.attachments) {
        try {
            switch (a.kind) {
            case AttachmentKind::Sketch: state.document.sketch = load_sketch(a.path); break;
            case AttachmentKind::Solid: state.document.solid = load_solid(a.path); break;
            case AttachmentKind::Mesh: state.mesh = read_mesh(a.path); break;
            case AttachmentKind::Image:
                read_image(a.path);
                state.images.push_back(a.path);
                break;
            case AttachmentKind::File:
                if (!std::filesystem::is_regular_file(a.path)) {
                    throw Error(ErrorCode::Io, "not a readable file");
                }
                break;
            }
        } catch (const Error& e) {
            throw Error(ErrorCode::InvalidAttachment, a.path.filename().string() + ": " + e.what());
        }
    }
    state.query = std::move(query);
    return state;
}

namespace {

Json resolve(const ScriptValue& v, const std::map<std::string, Json>& bindings) {
    switch (v.kind) {
    case ScriptValue::Kind::Literal: return v.literal;
    case ScriptValue::Kind::Variable: return bindings.at(v.variable);
    case ScriptValue::Kind::List: {
        Json out = Json::array();
        for (const auto& item : v.items) {
            out.push_back(resolve(item, bindings));
        }
        return out;
    }
    case ScriptValue::Kind::Object: {
        Json out = Json::object();
        for (const auto& [k, item] : v.fields) {
            out[k] = resolve(item, bindings);
        }
        return out;
    }
    }
    return nullptr;
}

void record_error(Feedback& fb, ErrorCode code, const std::string& message) {
    fb.error = ErrorInfo{code, message};
    fb.text += "error: " + std::string(error_code_name(code)) + ": " + message + "\n";
}

} // namespace

Feedback execute_action(SessionState& state, const ToolRegistry& registry, const Action& action, int step) {
    Feedback fb;
    std::set<std::string> bound;
    for (const auto& [name, value] : state.bindings) {
        bound.insert(name);
    }
    for (const auto& call : action.calls) {
        std::vector<std::string> vars;
        for (const auto& [key, value] : call.args) {
            collect_variables(value, vars);
        }
        for (const auto& v : vars) {
            if (!bound.count(v)) {
                fb.text += ">>> " + to_script(call) + "\n";
                record_error(fb, ErrorCode::UnboundVariable, "$" + v + " is not bound");
                return fb;
            }
        }
        if (call.bind) {
            bound.insert(*call.bind);
        }
    }

    for (std::size_t i = 0; i < action.calls.size(); ++i) {
        const ToolCall& call = action.calls[i];
        fb.text += ">>> " + to_script(call) + "\n";
        Json args = Json::object();
        for (const auto& [key, value] : call.args) {
            args[key] = resolve(value, state.bindings);
        }
        ToolContext ctx{state, step, static_cast<int>(i)};
        Document snapshot = state.document;
        ToolResult result;
        try {
            result = registry.invoke(ctx, call.tool, args);
        } catch (const Error& e) {
            state.document = std::move(snapshot);
            record_error(fb, e.code(), e.what());
            return fb;
        } catch (const std::exception& e) {
            state.document = std::move(snapshot);
            record_error(fb, ErrorCode::InvariantViolation, e.what());
            return fb;
        }
        fb.text += result.value.dump() + "\n";
        for (auto& a : result.artifacts) {
            fb.text += "[" + a.kind + "] " + a.path + "\n";
            fb.artifacts.push_back(std::move(a));
        }
        if (call.bind) {
            state.bindings[*call.bind] = std::move(result.value);
        }
    }
    return fb;
}

// ---------------------------------------------------------------------------

ScriptedPlanner::ScriptedPlanner(Json fixture) {
    if (!fixture.is_object() || !fixture.contains("steps") || !fixture["steps"].is_array()) {
        throw Error(ErrorCode::PlannerConfig, "planner fixture needs a 'steps' array");
    }
    for (auto& entry : fixture["steps"]) {
        if (!entry.is_object() || !(entry.contains("plan") || entry.contains("reply"))) {
            throw Error(ErrorCode::PlannerConfig, "each fixture step needs 'plan' or 'reply'");
        }
        entries_.push_back(entry);
    }
}

ScriptedPlanner ScriptedPlanner::from_file(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) {
        throw Error(ErrorCode::PlannerConfig, "planner fixture not found: " + path.string());
    }
    try {
        return ScriptedPlanner(Json::parse(read_text_file(path)));
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::PlannerConfig, "planner fixture " + path.string() + ": " + e.what());
    }
}

Query ScriptedPlanner::query_from_file(const std::filesystem::path& path) {
    Json doc;
    try {
        doc = Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::PlannerConfig, "planner fixture " + path.string() + ": " + e.what());
    }
    Query q;
    q.text = doc.value("query", "");
    for (const auto& a : doc.value("attachments", Json::array())) {
        const std::filesystem::path p = path.parent_path() / a.get<std::string>();
        q.attachments.push_back(Attachment{attachment_kind_for(p), p});
    }
    return q;
}

PlannerReply ScriptedPlanner::respond(const PlannerRequest& request) {
    if (next_ >= entries_.size()) {
        throw Error(ErrorCode::FixtureExhausted,
                    "fixture has " + std::to_string(entries_.size()) + " entries and all were used");
    }
    const Json& entry = entries_[next_++];
    PlannerReply reply;
    if (entry.contains("expect_context_length")) {
        const auto want = entry["expect_context_length"].get<std::size_t>();
        const std::size_t got = request.state.context.size();
        if (want != got) {
            reply.assertion_failures.push_back("step " + std::to_string(request.step) + ": expected context length " +
                                               std::to_string(want) + ", got " + std::to_string(got));
        }
    }
    if (entry.contains("reply")) {
        reply.text = entry["reply"].get<std::string>();
        return reply;
    }
    reply.text = "Plan: " + entry["plan"].get<std::string>();
    if (entry.contains("action")) {
        std::string script;
        if (entry["action"].is_array()) {
            for (const auto& line : entry["action"]) {
                script += line.get<std::string>() + "\n";
            }
        } else {
            script = entry["action"].get<std::string>();
        }
        reply.text += "\n```action\n" + script + "\n```";
    } else if (entry["plan"] == kTerminate) {
        reply.text = std::string(kTerminate);
    }
    return reply;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kGeneralContext =
    "You are a CAD design assistant working inside a parametric CAD environment. The environment\n"
    "holds a working 2D sketch (lines, circles, arcs and points linked by geometric constraints)\n"
    "and a 3D solid built from sketch-extrude steps. You act only by calling the tools listed\n"
    "below from an action script. After each action you receive its printed output, including\n"
    "images from the recognizer tools, and then decide the next step.\n"
    "Each statement is `tool(arg=value, ...)`, optionally bound as `$name = tool(...)`; later\n"
    "statements and later actions may pass `$name` as an argument value. One failing statement\n"
    "stops the action and leaves the document as it was before that statement.\n"
    "Sketch coordinates are unitless; angles are in radians.";

std::string context_text(const ContextBlock& block) {
    std::string out = "## Output of step " + std::to_string(block.step) + "\n" + block.feedback.text;
    if (!out.empty() && out.back() != '\n') {
        out += '\n';
    }
    return out;
}

} // namespace

Prompt build_prompt(const SessionState& state, const ToolRegistry& tools) {
    Prompt p;
    p.system = std::string(kGeneralContext) + "\n\n# Tools\n";
    for (const auto& spec : tools.specs()) {
        p.system += "\n## " + spec.signature() + "\n" + spec.docstring + "\n";
    }
    p.system += "\n# Reply format\n" + std::string(reply_grammar()) + "\n";

    p.request = "# Request\n" + state.query.text + "\n";
    if (!state.query.attachments.empty()) {
        p.request += "\n# Attachments\n";
        for (const auto& a : state.query.attachments) {
            p.request += "- " + std::string(attachment_kind_name(a.kind)) + ": " + a.path.filename().string() + "\n";
        }
    }
    for (const auto& path : state.images) {
        p.request_images.push_back(std::make_shared<const GrayImage>(read_image(path)));
    }

    if (!state.context.empty()) {
        p.context = "# Execution outputs, most recent first\n";
        for (const auto& block : state.context) {
            p.context += "\n" + context_text(block);
            for (const auto& a : block.feedback.artifacts) {
                if (a.image) {
                    p.context_images.push_back(a.image);
                }
            }
        }
    }
    return p;
}

// ---------------------------------------------------------------------------

namespace {

bool finished(SessionStatus s) {
    return s == SessionStatus::Terminated || s == SessionStatus::BudgetExceeded || s == SessionStatus::Failed;
}

void push_context(SessionState& state, const StepRecord& rec) {
    std::vector<ContextBlock> next;
    next.reserve(state.context.size() + 1);
    next.push_back(ContextBlock{rec.step, rec.feedback});
    next.insert(next.end(), state.context.begin(), state.context.end());
    state.context = std::move(next);
}

} // namespace

const StepRecord& run_step(SessionState& state, Planner& planner, const ToolRegistry& tools) {
    if (finished(state.status)) {
        throw Error(ErrorCode::InvariantViolation,
                    "session is " + std::string(status_name(state.status)) + "; no further steps run");
    }
    state.status = SessionStatus::Running;
    StepRecord rec;
    rec.step = static_cast<int>(state.transcript.size());

    auto finish = [&](SessionStatus status) -> const StepRecord& {
        state.status = status;
        rec.context_length = state.context.size();
        state.transcript.push_back(std::move(rec));
        return state.transcript.back();
    };
    auto ask = [&](PlannerRequest& req) -> std::optional<PlannerReply> {
        try {
            PlannerReply r = planner.respond(req);
            for (auto& w : r.warnings) {
                rec.warnings.push_back(std::move(w));
            }
            for (auto& f : r.assertion_failures) {
                state.flagged = true;
                rec.warnings.push_back("assertion failed: " + f);
            }
            return r;
        } catch (const Error& e) {
            if (e.code() == ErrorCode::FixtureExhausted) {
                rec.warnings.push_back("FixtureExhausted: " + std::string(e.what()) + "; treated as TERMINATE");
                rec.plan.text = std::string(kTerminate);
                return std::nullopt;
            }
            rec.plan.text.clear();
            record_error(rec.feedback, e.code(), e.what());
            return std::nullopt;
        }
    };

    PlannerRequest req{state, tools, rec.step, std::nullopt, std::nullopt};
    std::optional<PlannerReply> reply = ask(req);
    std::optional<PlannerOutput> parsed;
    for (int attempt = 0; attempt < 2 && reply; ++attempt) {
        try {
            parsed = parse_reply(reply->text);
            break;
        } catch (const Error& e) {
            if (attempt == 1) {
                rec.reply = reply->text;
                record_error(rec.feedback, ErrorCode::PlannerUnparseable, e.what());
                push_context(state, rec);
                return finish(SessionStatus::Running);
            }
            rec.warnings.push_back("reprompted after unparseable reply: " + std::string(e.what()));
            req.previous_reply = reply->text;
            req.parse_error = e.what();
            reply = ask(req);
        }
    }
    if (!parsed) {
        return finish(rec.plan.terminate() ? SessionStatus::Terminated : SessionStatus::Failed);
    }

    rec.plan = parsed->plan;
    if (rec.plan.terminate()) {
        return finish(SessionStatus::Terminated);
    }
    rec.action = std::move(parsed->action);
    rec.feedback = execute_action(state, tools, *rec.action, rec.step);
    push_context(state, rec);
    return finish(SessionStatus::Running);
}

void run_session(SessionState& state, Planner& planner, const ToolRegistry& tools, const StepObserver& observer) {
    state.status = SessionStatus::Running;
    const std::size_t start = state.transcript.size();
    while (state.status == SessionStatus::Running) {
        if (state.transcript.size() - start >= static_cast<std::size_t>(state.step_budget)) {
            state.status = SessionStatus::BudgetExceeded;
            break;
        }
        const StepRecord& rec = run_step(state, planner, tools);
        if (observer) {
            observer(rec);
        }
    }
}

SessionState run_session(Query query, Planner& planner, const ToolRegistry& tools, int step_budget,
                         const StepObserver& observer) {
    SessionState state = start_session(std::move(query), step_budget);
    run_session(state, planner, tools, observer);
    return state;
}

// ---------------------------------------------------------------------------

Json feedback_to_json(const Feedback& f) {
    Json artifacts = Json::array();
    for (const auto& a : f.artifacts) {
        artifacts.push_back(Json{{"kind", a.kind}, {"path", a.path}});
    }
    Json j{{"text", f.text}, {"artifacts", std::move(artifacts)}};
    j["error"] = f.error ? Json{{"code", error_code_name(f.error->code)}, {"message", f.error->message}} : Json();
    return j;
}

Feedback feedback_from_json(const Json& j) {
    Feedback f;
    f.text = j.at("text").get<std::string>();
    for (const auto& a : j.at("artifacts")) {
        f.artifacts.push_back(Artifact{a.at("kind").get<std::string>(), a.at("path").get<std::string>(), nullptr});
    }
    if (j.contains("error") && !j["error"].is_null()) {
        const auto code = parse_error_code(j["error"].at("code").get<std::string>());
        if (!code) {
            throw Error(ErrorCode::SchemaError, "unknown error code in transcript");
        }
        f.error = ErrorInfo{*code, j["error"].at("message").get<std::string>()};
    }
    return f;
}

Json step_to_json(const StepRecord& r) {
    Json j;
    j["step"] = r.step;
    j["plan"] = r.plan.text;
    j["action"] = r.action ? Json(to_script(*r.action)) : Json();
    j["feedback"] = feedback_to_json(r.feedback);
    j["context_length"] = r.context_length;
    j["warnings"] = r.warnings;
    if (r.reply) {
        j["reply"] = *r.reply;
    }
    return j;
}

StepRecord step_from_json(const Json& j) {
    try {
        StepRecord r;
        r.step = j.at("step").get<int>();
        r.plan.text = j.at("plan").get<std::string>();
        if (!j.at("action").is_null()) {
            r.action = parse_action(j["action"].get<std::string>());
        }
        r.feedback = feedback_from_json(j.at("feedback"));
        r.context_length = j.at("context_length").get<std::size_t>();
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        if (j.contains("reply")) {
            r.reply = j["reply"].get<std::string>();
        }
        return r;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("bad step record: ") + e.what());
    }
}

std::string transcript_jsonl(const std::vector<StepRecord>& transcript) {
    std::string out;
    for (const auto& r : transcript) {
        out += step_to_json(r).dump() + "\n";
    }
    return out;
}

std::vector<StepRecord> parse_transcript_jsonl(std::string_view text) {
    std::vector<StepRecord> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) {
            eol = text.size();
        }
        const std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        try {
            out.push_back(step_from_json(Json::parse(line)));
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::SyntaxError, std::string("transcript line: ") + e.what());
        }
    }
    return out;
}

Json document_to_json(const Document& doc) {
    return Json{{"sketch", Json::parse(to_document(doc.sketch))}, {"solid", solid_to_json(doc.solid)}};
}

Document document_from_json(const Json& j) {
    Document doc;
    doc.sketch = from_json(j.at("sketch"));
    doc.solid = solid_from_json(j.at("solid"));
    return doc;
}

} // namespace cadkit::agent
