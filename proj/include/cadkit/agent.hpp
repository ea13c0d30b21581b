#pragma once

#include "cadkit/image.hpp"
#include "cadkit/mesh.hpp"
#include "cadkit/sketch.hpp"
#include "cadkit/solid.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cadkit::agent {

using Json = nlohmann::ordered_json;

inline constexpr int kDefaultStepBudget = 16;
inline constexpr std::string_view kTerminate = "TERMINATE";

// ---------------------------------------------------------------------------
// Action script

/// Argument value in an action script: a JSON literal, a $variable, or a
/// list/object that may contain variables.
struct ScriptValue {
    enum class Kind { Literal, Variable, List, Object };

    Kind kind = Kind::Literal;
    Json literal;
    std::string variable;
    std::vector<ScriptValue> items;
    std::vector<std::pair<std::string, ScriptValue>> fields;

    static ScriptValue of(Json value);
    static ScriptValue var(std::string name);

    friend bool operator==(const ScriptValue&, const ScriptValue&) = default;
};

struct ToolCall {
    std::string tool;
    std::vector<std::pair<std::string, ScriptValue>> args;
    std::optional<std::string> bind;

    friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

struct Action {
    std::vector<ToolCall> calls;

    friend bool operator==(const Action&, const Action&) = default;
};

/// Statements are `[$name =] tool(key=value, ...)`, separated by newlines or
/// ';'. Values are JSON literals (numbers, "strings", true, false, null,
/// [lists], {"objects": ...}) or $variables. '#' starts a comment.
/// Throws SyntaxError with line and column.
Action parse_action(std::string_view script);

/// Canonical one-call-per-line form; parse_action(to_script(a)) == a.
std::string to_script(const ToolCall& call);
std::string to_script(const Action& action);

/// Variables an expression reads, in order of appearance.
void collect_variables(const ScriptValue& value, std::vector<std::string>& out);

struct Plan {
    std::string text;

    bool terminate() const { return text == kTerminate; }

    friend bool operator==(const Plan&, const Plan&) = default;
};

struct PlannerOutput {
    Plan plan;
    std::optional<Action> action;
};

/// Reply grammar: a plan (optionally prefixed "Plan:") followed by one fenced
/// ```action block, or the single word TERMINATE. Throws PlannerUnparseable.
PlannerOutput parse_reply(std::string_view reply);

/// Reminder appended to reprompts after an unparseable reply.
std::string_view reply_grammar();

// ---------------------------------------------------------------------------
// Environment state

struct Artifact {
    std::string kind = "image";
    /// Path relative to the session's artifact directory.
    std::string path;
    /// Pixel data, kept in memory for multimodal planners.
    std::shared_ptr<const GrayImage> image;

    friend bool operator==(const Artifact& a, const Artifact& b) { return a.kind == b.kind && a.path == b.path; }
};

struct ErrorInfo {
    ErrorCode code = ErrorCode::InvariantViolation;
    std::string message;

    friend bool operator==(const ErrorInfo&, const ErrorInfo&) = default;
};

struct Feedback {
    std::string text;
    std::vector<Artifact> artifacts;
    std::optional<ErrorInfo> error;

    bool ok() const { return !error.has_value(); }

    friend bool operator==(const Feedback&, const Feedback&) = default;
};

/// One entry of the running context: the output of one step.
struct ContextBlock {
    int step = 0;
    Feedback feedback;

    friend bool operator==(const ContextBlock&, const ContextBlock&) = default;
};

enum class AttachmentKind { Sketch, Solid, Mesh, Image, File };

std::string_view attachment_kind_name(AttachmentKind k);
/// Guesses from the file name: *.sketch.json, *.solid.json, .obj/.stl,
/// .png/.pgm, anything else is a plain file.
AttachmentKind attachment_kind_for(const std::filesystem::path& path);

struct Attachment {
    AttachmentKind kind = AttachmentKind::File;
    std::filesystem::path path;
};

struct Query {
    std::string text;
    std::vector<Attachment> attachments;
};

/// Mutable CAD state: the working sketch and the solid built so far.
struct Document {
    SketchGraph sketch;
    SolidModel solid;
};

enum class SessionStatus { Idle, Running, Terminated, BudgetExceeded, Failed };

std::string_view status_name(SessionStatus s);
std::optional<SessionStatus> parse_status(std::string_view name);

struct StepRecord {
    int step = 0;
    Plan plan;
    std::optional<Action> action;
    Feedback feedback;
    /// Context size after the step.
    std::size_t context_length = 0;
    std::vector<std::string> warnings;
    /// Raw planner text when the reply could not be parsed.
    std::optional<std::string> reply;

    bool terminal() const { return plan.terminate(); }

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct SessionState {
    Query query;
    Document document;
    std::map<std::string, Json> bindings;
    std::vector<StepRecord> transcript;
    /// Newest block first.
    std::vector<ContextBlock> context;
    int step_budget = kDefaultStepBudget;
    SessionStatus status = SessionStatus::Idle;
    /// Set when a scripted fixture's context assertion fails.
    bool flagged = false;
    /// Where image artifacts are written; empty keeps them in memory only.
    std::filesystem::path artifact_dir;

    std::optional<TriangleMesh> mesh;
    std::vector<std::filesystem::path> images;
};

/// Loads sketch, solid and mesh attachments. Throws InvalidAttachment.
SessionState start_session(Query query, int step_budget = kDefaultStepBudget);

// ---------------------------------------------------------------------------
// Tools

struct ToolParam {
    std::string name;
    std::string type;
    bool required = false;
};

struct ToolSpec {
    std::string name;
    std::vector<ToolParam> params;
    std::string returns;
    std::string docstring;

    /// name(a: type, b?: type) -> returns
    std::string signature() const;
};

/// Resolved keyword arguments with typed accessors that throw BadArgument.
class Args {
public:
    explicit Args(Json object) : values_(std::move(object)) {}

    bool has(std::string_view name) const;
    const Json& raw(std::string_view name) const;
    double number(std::string_view name) const;
    double number(std::string_view name, double fallback) const;
    long long integer(std::string_view name) const;
    bool boolean(std::string_view name, bool fallback) const;
    std::string string(std::string_view name) const;
    std::string string(std::string_view name, std::string fallback) const;
    Vec2 vec2(std::string_view name) const;
    Vec3 vec3(std::string_view name) const;
    Vec3 vec3(std::string_view name, Vec3 fallback) const;
    const Json& values() const { return values_; }

private:
    Json values_;
};

struct ToolResult {
    Json value;
    std::vector<Artifact> artifacts;
};

struct ToolContext {
    SessionState& state;
    int step = 0;
    int call = 0;

    Document& document() { return state.document; }
    /// Registers an image artifact named "step<N>.call<M>.<name>.png" and
    /// writes it when the session has an artifact directory.
    Artifact image(const std::string& name, const GrayImage& img);
};

using ToolFn = std::function<ToolResult(ToolContext&, const Args&)>;

class ToolRegistry {
public:
    /// Throws DuplicateTool or EmptyDocstring.
    void register_tool(ToolSpec spec, ToolFn fn);

    bool contains(std::string_view name) const;
    const ToolSpec& spec(std::string_view name) const;
    /// Registration order.
    const std::vector<ToolSpec>& specs() const { return specs_; }

    /// Checks names against the spec, then runs. Throws UnknownTool,
    /// BadArgument or whatever the tool throws.
    ToolResult invoke(ToolContext& ctx, const std::string& name, const Json& args) const;

private:
    std::vector<ToolSpec> specs_;
    std::map<std::string, ToolFn, std::less<>> fns_;
};

/// addGeometry, addConstraint, delGeometries, recompute, sketch_recognizer,
/// solid_recognizer, constraint_checker, extrude, cross_section,
/// handdrawn_parameterize.
ToolRegistry standard_registry();

/// Runs calls in order. Each call is applied to a copy of the document that
/// replaces it only on success; the first failure stops the action and is
/// reported in the feedback. Never throws for tool or script errors.
Feedback execute_action(SessionState& state, const ToolRegistry& registry, const Action& action, int step);

// ---------------------------------------------------------------------------
// Planners and the loop

struct PlannerRequest {
    const SessionState& state;
    const ToolRegistry& tools;
    int step = 0;
    /// Set on a reprompt after an unparseable reply.
    std::optional<std::string> previous_reply;
    std::optional<std::string> parse_error;
};

struct PlannerReply {
    std::string text;
    std::vector<std::string> warnings;
    /// Failed expectations declared by a scripted fixture.
    std::vector<std::string> assertion_failures;
};

class Planner {
public:
    virtual ~Planner() = default;
    virtual PlannerReply respond(const PlannerRequest& request) = 0;
};

/// Replays a fixture {"steps": [{"plan", "action"} | {"reply"}, ...]} where
/// an entry may declare "expect_context_length". Throws FixtureExhausted
/// when called past the last entry.
class ScriptedPlanner : public Planner {
public:
    explicit ScriptedPlanner(Json fixture);
    static ScriptedPlanner from_file(const std::filesystem::path& path);
    /// The optional "query" and "attachments" of a fixture file, attachment
    /// paths resolved against the fixture's directory.
    static Query query_from_file(const std::filesystem::path& path);

    PlannerReply respond(const PlannerRequest& request) override;
    std::size_t remaining() const { return entries_.size() - next_; }

private:
    std::vector<Json> entries_;
    std::size_t next_ = 0;
};

struct Prompt {
    /// General context followed by the tool catalogue.
    std::string system;
    /// User request and attachment list.
    std::string request;
    /// Running context, newest first.
    std::string context;
    std::vector<std::shared_ptr<const GrayImage>> request_images;
    /// Artifact images of the context blocks, in context order.
    std::vector<std::shared_ptr<const GrayImage>> context_images;
};

Prompt build_prompt(const SessionState& state, const ToolRegistry& tools);

using StepObserver = std::function<void(const StepRecord&)>;

/// One planner round trip and execution. Throws InvariantViolation when the
/// session is already finished.
const StepRecord& run_step(SessionState& state, Planner& planner, const ToolRegistry& tools);

/// Steps until TERMINATE, a planner failure or the budget. The budget counts
/// the steps of this run.
void run_session(SessionState& state, Planner& planner, const ToolRegistry& tools,
                 const StepObserver& observer = {});
SessionState run_session(Query query, Planner& planner, const ToolRegistry& tools,
                         int step_budget = kDefaultStepBudget, const StepObserver& observer = {});

// ---------------------------------------------------------------------------
// Serialization

Json feedback_to_json(const Feedback& f);
Feedback feedback_from_json(const Json& j);
Json step_to_json(const StepRecord& r);
StepRecord step_from_json(const Json& j);
/// One compact JSON object per line.
std::string transcript_jsonl(const std::vector<StepRecord>& transcript);
std::vector<StepRecord> parse_transcript_jsonl(std::string_view text);

/// {"sketch": ..., "solid": ...} with the lossless sketch document.
Json document_to_json(const Document& doc);
Document document_from_json(const Json& j);

} // namespace cadkit::agent
