#include <doctest.h>

#include "agent_replay.hpp"
#include "cadkit/llm.hpp"
#include "cadkit/serialization.hpp"

#include <httplib.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <thread>

using namespace cadkit;
using namespace cadkit::agent;
using namespace cadkit::testing;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(CADKIT_SOURCE_DIR) / "tests/fixtures/agent";
const fs::path kGolden = fs::path(CADKIT_SOURCE_DIR) / "tests/golden";

Json fixture(std::initializer_list<Json> steps) { return Json{{"steps", Json(steps)}}; }

Json step(const std::string& plan, const std::string& action) { return Json{{"plan", plan}, {"action", action}}; }

std::size_t count(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
        ++n;
    }
    return n;
}

// Feedback line printed for call `index` (0-based) of an action.
Json call_output(const Feedback& fb, int index) {
    std::size_t pos = 0;
    for (int i = 0; i <= index; ++i) {
        pos = fb.text.find(">>> ", pos);
        REQUIRE(pos != std::string::npos);
        pos = fb.text.find('\n', pos) + 1;
    }
    const auto eol = fb.text.find('\n', pos);
    return Json::parse(fb.text.substr(pos, eol - pos));
}

struct MockServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    template <class Handler>
    explicit MockServer(Handler handler) {
        server.Post("/v1/chat/completions", handler);
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~MockServer() {
        server.stop();
        thread.join();
    }

    LlmConfig config() const {
        LlmConfig cfg;
        cfg.api_base = "http://127.0.0.1:" + std::to_string(port) + "/v1";
        cfg.model = "mock";
        cfg.initial_backoff_ms = 1;
        cfg.timeout_s = 5;
        return cfg;
    }
};

std::string completion(const std::string& content) {
    return Json{{"choices", Json::array({Json{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

} // namespace

TEST_SUITE("agent") {

TEST_CASE("action scripts parse and print canonically") {
    const Action a = parse_action("$l = addGeometry(type=\"line\", start=[0, 0], end=[1.5, -2e-1])  # first\n"
                                  "addConstraint(kind=\"horizontal\",\n    first=$l,); recompute()\n");
    REQUIRE(a.calls.size() == 3);
    CHECK(a.calls[0].bind == std::optional<std::string>("l"));
    CHECK(a.calls[0].tool == "addGeometry");
    CHECK(a.calls[0].args[2].second.items[1].literal.get<double>() == doctest::Approx(-0.2));
    CHECK(a.calls[1].args[1].second.kind == ScriptValue::Kind::Variable);
    CHECK(a.calls[2].args.empty());
    CHECK(parse_action(to_script(a)) == a);
    CHECK(to_script(a.calls[1]) == "addConstraint(kind=\"horizontal\", first=$l)");

    const Action nested = parse_action("f(x={\"a\": [$v, null, true]}, y=\"q\\\"s\")");
    CHECK(parse_action(to_script(nested)) == nested);
    std::vector<std::string> vars;
    collect_variables(nested.calls[0].args[0].second, vars);
    CHECK(vars == std::vector<std::string>{"v"});
}

TEST_CASE("action script errors carry a position") {
    for (const char* bad : {"f(x=)", "f(x=1", "f(x=undefined)", "f(x=1, x=2)", "$ = f()", "f() g()", "f(x=\"open)"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(parse_action(bad), Error);
    }
    try {
        parse_action("f()\ng(x=)");
        FAIL("expected a syntax error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SyntaxError);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("planner replies follow the plan and action grammar") {
    CHECK(parse_reply("TERMINATE").plan.terminate());
    CHECK(parse_reply("  Plan: TERMINATE \n").plan.terminate());
    CHECK_FALSE(parse_reply("TERMINATE").action.has_value());

    const auto out = parse_reply("Plan: look at it\n```action\n$s = sketch_recognizer()\n```\n");
    CHECK(out.plan.text == "look at it");
    REQUIRE(out.action);
    CHECK(out.action->calls.at(0).tool == "sketch_recognizer");

    for (const char* bad : {"just words", "```action\nf()\n```", "TERMINATE\n```action\nf()\n```",
                            "Plan: x\n```python\nf()\n```", "Plan: x\n```action\nf()\n", "Plan: x\n```action\n```",
                            "Plan: x\n```action\nf(\n```", "Plan: x\n```action\nf()\n```\ntrailing"}) {
        CAPTURE(bad);
        try {
            parse_reply(bad);
            FAIL("accepted");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::PlannerUnparseable);
        }
    }
}

TEST_CASE("registry rejects duplicates and empty docstrings") {
    ToolRegistry reg;
    auto fn = [](ToolContext&, const Args&) { return ToolResult{}; };
    reg.register_tool({"add_constraint", {}, "int", "Adds a constraint."}, fn);
    CHECK(reg.contains("add_constraint"));
    try {
        reg.register_tool({"add_constraint", {}, "int", "Again."}, fn);
        FAIL("duplicate accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DuplicateTool);
    }
    try {
        reg.register_tool({"quiet", {}, "int", "  \n"}, fn);
        FAIL("empty docstring accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyDocstring);
    }
    SessionState state;
    const Prompt p = build_prompt(state, reg);
    CHECK(count(p.system, "Adds a constraint.") == 1);
}

TEST_CASE("standard registry mirrors the module table") {
    const auto reg = standard_registry();
    std::vector<std::string> names;
    for (const auto& s : reg.specs()) {
        names.push_back(s.name);
        CHECK_FALSE(s.docstring.empty());
    }
    CHECK(names == std::vector<std::string>{"addGeometry", "addConstraint", "delGeometries", "recompute",
                                            "sketch_recognizer", "solid_recognizer", "constraint_checker", "extrude",
                                            "cross_section", "handdrawn_parameterize"});
    CHECK(reg.spec("delGeometries").signature() == "delGeometries(ids: list[int]) -> int");
}

TEST_CASE("prompt lists every docstring once and the context newest first") {
    const auto reg = standard_registry();
    SessionState state = start_session({"draw a slot", {}});
    Prompt p = build_prompt(state, reg);
    for (const auto& s : reg.specs()) {
        CAPTURE(s.name);
        CHECK(count(p.system + p.request + p.context, s.docstring) == 1);
        CHECK(count(p.system, s.signature()) == 1);
    }
    CHECK(p.request.find("draw a slot") != std::string::npos);
    CHECK(p.context.empty());

    state.context.push_back({1, {"second output\n", {}, {}}});
    state.context.push_back({0, {"first output\n", {}, {}}});
    p = build_prompt(state, reg);
    CHECK(p.context.find("second output") < p.context.find("first output"));
}

TEST_CASE("execute_action runs calls in order and binds outputs") {
    const auto reg = standard_registry();
    SessionState state;
    const Feedback fb = execute_action(
        state, reg,
        parse_action("$l = addGeometry(type=\"line\", start=[0, 0], end=[2, 0.001])\n"
                     "addConstraint(kind=\"horizontal\", first=$l)"),
        0);
    CHECK(fb.ok());
    CHECK(call_output(fb, 0) == 0);
    CHECK(call_output(fb, 1) == 0);
    CHECK(state.bindings.at("l") == 0);
    CHECK(state.document.sketch.size() == 1);
    CHECK(state.document.sketch.constraints().size() == 1);

    const Feedback solved = execute_action(state, reg, parse_action("$r = recompute()"), 1);
    CHECK(state.bindings.at("r")["converged"] == true);
    const Line l = std::get<Line>(state.document.sketch.at(PrimitiveId{0}));
    CHECK(std::abs(l.start.y - l.end.y) < 1e-9);
    CHECK(solved.text.find(">>> $r = recompute()") == 0);
}

TEST_CASE("unbound variables fail before anything runs") {
    const auto reg = standard_registry();
    SessionState state;
    const Feedback fb = execute_action(
        state, reg,
        parse_action("addGeometry(type=\"point\", position=[1, 1])\naddConstraint(kind=\"horizontal\", first=$x)"), 0);
    REQUIRE(fb.error);
    CHECK(fb.error->code == ErrorCode::UnboundVariable);
    CHECK(fb.text.find("error: UnboundVariable") != std::string::npos);
    CHECK(state.document.sketch.empty());
}

TEST_CASE("a failed call leaves the document as it was before that call") {
    auto reg = standard_registry();
    reg.register_tool({"scribble_then_fail", {}, "int", "Adds a point, then fails."},
                      [](ToolContext& ctx, const Args&) -> ToolResult {
                          ctx.document().sketch.add_primitive(Point{{9, 9}});
                          ctx.document().sketch = SketchGraph{};
                          throw Error(ErrorCode::BadArgument, "always fails");
                      });
    SessionState state;
    execute_action(state, reg, parse_action("addGeometry(type=\"line\", start=[0, 0], end=[1, 0])"), 0);
    const Document before = state.document;

    const Feedback fb = execute_action(state, reg,
                                       parse_action("addGeometry(type=\"circle\", center=[0, 0], radius=1)\n"
                                                    "scribble_then_fail()\n"
                                                    "addGeometry(type=\"point\", position=[5, 5])"),
                                       1);
    REQUIRE(fb.error);
    CHECK(fb.error->code == ErrorCode::BadArgument);
    CHECK(state.document.sketch.size() == before.sketch.size() + 1);
    CHECK(std::holds_alternative<Circle>(state.document.sketch.primitives().back().primitive));
    CHECK(count(fb.text, ">>> ") == 2);

    const Document mid = state.document;
    const Feedback bad = execute_action(state, reg,
                                        parse_action("addConstraint(kind=\"tangent\", first=0, second=7)\n"
                                                     "extrude(operation=\"cut\")"),
                                        2);
    REQUIRE(bad.error);
    CHECK(bad.error->code == ErrorCode::DanglingReference);
    CHECK(state.document.sketch == mid.sketch);
}

TEST_CASE("tool argument errors are reported as feedback") {
    const auto reg = standard_registry();
    SessionState state;
    for (const char* script : {"nope()", "addGeometry(type=\"spline\")", "addGeometry(type=\"line\", start=[0])",
                               "addGeometry(type=\"line\", start=[0, 0], end=[1, 1], colour=2)", "addGeometry()",
                               "addGeometry(type=\"arc\", start=[0, 0], mid=[1, 1], end=[2, 2])",
                               "solid_recognizer()", "cross_section(normal=[0, 0, 0])", "handdrawn_parameterize()"}) {
        CAPTURE(script);
        const Feedback fb = execute_action(state, reg, parse_action(script), 0);
        CHECK(fb.error.has_value());
        CHECK(fb.text.find("error: ") != std::string::npos);
    }
    CHECK(state.document.sketch.empty());
}

TEST_CASE("constraint checker output carries validity and movement") {
    const auto reg = standard_registry();
    SessionState state;
    execute_action(state, reg, parse_action("addGeometry(type=\"line\", start=[0, 0], end=[3, 0])"), 0);
    const Feedback fb = execute_action(state, reg,
                                       parse_action("$h = constraint_checker(kind=\"horizontal\", first=0)\n"
                                                    "$v = constraint_checker(kind=\"vertical\", first=0)\n"
                                                    "$s = constraint_checker(kind=\"coincident\", first=\"0.start\", "
                                                    "second=[0, \"end\"])"),
                                       1);
    REQUIRE(fb.ok());
    CHECK(state.bindings["h"]["valid"] == true);
    CHECK(state.bindings["h"]["causes_movement"] == false);
    CHECK(state.bindings["v"]["valid"] == true);
    CHECK(state.bindings["v"]["causes_movement"] == true);
    CHECK(state.bindings["s"]["valid"] == false);
    CHECK(state.bindings["s"]["degenerate"] == true);
    CHECK(fb.text.find("\"causes_movement\"") != std::string::npos);
    CHECK(state.document.sketch.constraints().empty());
}

TEST_CASE("three-point arcs, deletion and the recognizer image") {
    const auto reg = standard_registry();
    SessionState state;
    const Feedback fb = execute_action(state, reg,
                                       parse_action("$a = addGeometry(type=\"arc\", start=[1, 0], mid=[0, 1], end=[-1, 0])\n"
                                                    "$b = addGeometry(type=\"point\", position=[3, 3])\n"
                                                    "$n = delGeometries(ids=[$b, 40])\n"
                                                    "$s = sketch_recognizer()"),
                                       0);
    REQUIRE(fb.ok());
    const Arc arc = std::get<Arc>(state.document.sketch.at(PrimitiveId{0}));
    CHECK(arc.radius == doctest::Approx(1.0));
    CHECK_FALSE(arc.clockwise);
    CHECK(state.bindings["n"] == 1);
    CHECK(state.bindings["s"]["primitives"].size() == 1);
    REQUIRE(fb.artifacts.size() == 1);
    CHECK(fb.artifacts[0].path == "step0.call3.sketch.png");
    REQUIRE(fb.artifacts[0].image);
    CHECK(fb.artifacts[0].image->width == 512);
}

TEST_CASE("scripted session runs to TERMINATE with prepend-ordered context") {
    ScriptedPlanner planner(fixture({step("add a line", "$l = addGeometry(type=\"line\", start=[0, 0], end=[1, 0])"),
                                     step("constrain it", "addConstraint(kind=\"horizontal\", first=$l)"),
                                     Json{{"plan", "TERMINATE"}}}));
    const auto reg = standard_registry();
    SessionState state = start_session({"one horizontal line", {}});
    std::vector<std::string> violations;
    run_session(state, planner, reg, context_checker(state, violations));
    CHECK(violations.empty());
    REQUIRE(state.transcript.size() == 3);
    CHECK(state.transcript.back().terminal());
    CHECK_FALSE(state.transcript.back().action.has_value());
    CHECK(state.status == SessionStatus::Terminated);
    CHECK(state.context.size() == 2);
    CHECK(state.context[0].step == 1);
    CHECK(state.context[1].step == 0);
    CHECK(state.transcript[0].context_length == 1);
    CHECK(state.transcript[2].context_length == 2);

    CHECK_THROWS_AS(run_step(state, planner, reg), Error);
    CHECK(state.transcript.size() == 3);
}

TEST_CASE("fixture exhaustion ends the session with a warning") {
    ScriptedPlanner planner(fixture({step("a", "addGeometry(type=\"point\", position=[0, 0])"),
                                     step("b", "addGeometry(type=\"point\", position=[1, 0])")}));
    const auto reg = standard_registry();
    SessionState state = run_session({"two points", {}}, planner, reg);
    REQUIRE(state.transcript.size() == 3);
    CHECK(state.transcript[0].action.has_value());
    CHECK(state.transcript[1].action.has_value());
    CHECK(state.transcript[2].terminal());
    REQUIRE(state.transcript[2].warnings.size() == 1);
    CHECK(state.transcript[2].warnings[0].find("FixtureExhausted") == 0);
    CHECK(state.status == SessionStatus::Terminated);
    CHECK_FALSE(state.flagged);
}

TEST_CASE("failed context-length assertions flag the session") {
    Json f = fixture({step("a", "recompute()"), Json{{"plan", "TERMINATE"}, {"expect_context_length", 5}}});
    ScriptedPlanner planner(f);
    const auto reg = standard_registry();
    SessionState state = run_session({"x", {}}, planner, reg);
    CHECK(state.flagged);
    CHECK(state.transcript.back().warnings.at(0).find("expected context length 5, got 1") != std::string::npos);
}

TEST_CASE("step budget ends runaway sessions") {
    ScriptedPlanner planner(fixture({step("a", "recompute()"), step("b", "recompute()"), step("c", "recompute()")}));
    const auto reg = standard_registry();
    SessionState state = run_session({"loop", {}}, planner, reg, 2);
    CHECK(state.status == SessionStatus::BudgetExceeded);
    CHECK(state.transcript.size() == 2);
    CHECK(planner.remaining() == 1);
}

TEST_CASE("an unparseable reply is reprompted once") {
    const auto reg = standard_registry();
    {
        ScriptedPlanner planner(fixture({Json{{"reply", "I will add a point"}},
                                         step("add a point", "addGeometry(type=\"point\", position=[0, 0])"),
                                         Json{{"plan", "TERMINATE"}}}));
        SessionState state = run_session({"x", {}}, planner, reg);
        REQUIRE(state.transcript.size() == 2);
        CHECK(state.transcript[0].feedback.ok());
        CHECK(state.transcript[0].warnings.at(0).find("reprompted") == 0);
        CHECK(state.document.sketch.size() == 1);
    }
    {
        ScriptedPlanner planner(fixture({Json{{"reply", "no"}}, Json{{"reply", "still no"}},
                                         step("add a point", "addGeometry(type=\"point\", position=[0, 0])"),
                                         Json{{"plan", "TERMINATE"}}}));
        SessionState state = start_session({"x", {}});
        std::vector<std::string> violations;
        run_session(state, planner, reg, context_checker(state, violations));
        CHECK(violations.empty());
        REQUIRE(state.transcript.size() == 3);
        const StepRecord& failed = state.transcript[0];
        REQUIRE(failed.feedback.error);
        CHECK(failed.feedback.error->code == ErrorCode::PlannerUnparseable);
        CHECK(failed.reply == std::optional<std::string>("still no"));
        CHECK_FALSE(failed.action);
        CHECK(state.context.back().feedback.error->code == ErrorCode::PlannerUnparseable);
        CHECK(state.status == SessionStatus::Terminated);
    }
}

TEST_CASE("transcripts round-trip through JSON lines") {
    ScriptedPlanner planner(fixture({Json{{"reply", "?"}}, Json{{"reply", "??"}},
                                     step("p", "$l = addGeometry(type=\"line\", start=[0, 0], end=[1, 1])\n"
                                               "sketch_recognizer()\naddConstraint(kind=\"vertical\", first=$q)"),
                                     Json{{"plan", "TERMINATE"}}}));
    const auto reg = standard_registry();
    const SessionState state = run_session({"x", {}}, planner, reg);
    const std::string text = transcript_jsonl(state.transcript);
    CHECK(count(text, "\n") == state.transcript.size());
    const auto back = parse_transcript_jsonl(text);
    CHECK(back == state.transcript);
    CHECK(transcript_jsonl(back) == text);
}

TEST_CASE("corrupt attachments are rejected") {
    const fs::path dir = fs::temp_directory_path() / "cadkit_agent_attach";
    fs::create_directories(dir);
    write_text_file(dir / "bad.sketch.json", "{not json");
    try {
        start_session({"x", {{AttachmentKind::Sketch, dir / "bad.sketch.json"}}});
        FAIL("accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidAttachment);
    }
    CHECK(attachment_kind_for("a/b.sketch.json") == AttachmentKind::Sketch);
    CHECK(attachment_kind_for("part.STL") == AttachmentKind::File);
    CHECK(attachment_kind_for("part.stl") == AttachmentKind::Mesh);
    CHECK(attachment_kind_for("hand.png") == AttachmentKind::Image);
}

TEST_CASE("golden autoconstraining session replays byte for byte") {
    const Replay first = replay_fixture(kFixtures / "autoconstrain.fixture.json");
    const Replay second = replay_fixture(kFixtures / "autoconstrain.fixture.json");
    CHECK(first.transcript == second.transcript);
    CHECK(first.context_violations.empty());
    CHECK_FALSE(first.state.flagged);
    CHECK(first.state.status == SessionStatus::Terminated);

    const auto& t = first.state.transcript;
    REQUIRE(t.size() == 4);
    CHECK(t[0].plan.text.find("recognize") != std::string::npos);
    CHECK(t[0].action->calls.at(0).tool == "sketch_recognizer");
    CHECK(t[3].terminal());

    // Checker outcomes follow from the drawn geometry: lines 0 and 2 are
    // horizontal, 3 vertical, the arc meets both lines tangentially.
    const auto& b = first.state.bindings;
    for (const char* name : {"c0", "c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8"}) {
        CAPTURE(name);
        CHECK(b.at(name)["valid"] == true);
        CHECK(b.at(name)["causes_movement"] == false);
    }
    CHECK(b.at("c9")["valid"] == true);
    CHECK(b.at("c9")["causes_movement"] == true);
    CHECK(b.at("c10")["valid"] == false);
    CHECK(b.at("c10")["degenerate"] == true);
    CHECK(first.state.document.sketch.constraints().size() == 9);
    CHECK(b.at("r")["converged"] == true);

    CHECK(matches_golden(kGolden / "agent_autoconstrain.transcript.jsonl", first.transcript));
    CHECK(matches_golden(kGolden / "agent_autoconstrain.sketch.json", to_document(first.state.document.sketch)));
}

TEST_CASE("golden sketch-extrude session replays byte for byte") {
    const fs::path artifacts = fs::temp_directory_path() / "cadkit_agent_artifacts";
    fs::remove_all(artifacts);
    const Replay first = replay_fixture(kFixtures / "extrude.fixture.json", artifacts);
    const Replay second = replay_fixture(kFixtures / "extrude.fixture.json");
    CHECK(first.transcript == second.transcript);
    CHECK(first.context_violations.empty());
    CHECK_FALSE(first.state.flagged);

    const auto& t = first.state.transcript;
    REQUIRE(t.size() == 5);
    for (const auto& rec : t) {
        CAPTURE(rec.step);
        CHECK(rec.feedback.ok());
        for (const auto& a : rec.feedback.artifacts) {
            CHECK(fs::exists(artifacts / a.path));
        }
    }
    CHECK(t[1].feedback.artifacts.size() == 1);
    CHECK(t[2].feedback.artifacts.size() == 4);

    const auto& b = first.state.bindings;
    CHECK(b.at("h")["primitives"].size() == 5);
    CHECK(first.state.document.solid.size() == 1);
    CHECK(first.state.document.sketch.empty());
    // Plate 4 x 2 minus a hole of radius 0.5; flattening loses a little area.
    CHECK(b.at("mid")["area"].get<double>() == doctest::Approx(8.0 - kPi * 0.25).epsilon(1e-4));
    CHECK(b.at("mid")["holes"] == 1);
    // Across the hole center: two 0.5 x 1 strips beside the hole.
    CHECK(b.at("across")["area"].get<double>() == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(b.at("across")["loops"] == 2);

    CHECK(matches_golden(kGolden / "agent_extrude.transcript.jsonl", first.transcript));
    CHECK(matches_golden(kGolden / "agent_extrude.solid.json", solid_to_json(first.state.document.solid).dump(2) + "\n"));
}

TEST_CASE("llm planner configuration comes from the environment") {
    ::unsetenv("LLM_API_BASE");
    ::setenv("LLM_MODEL", "m", 1);
    CHECK_THROWS_AS(LlmConfig::from_env(), Error);
    ::setenv("LLM_API_BASE", "http://localhost:9/v1", 1);
    const LlmConfig cfg = LlmConfig::from_env();
    CHECK(cfg.model == "m");
    CHECK(cfg.max_attempts == 3);
    ::unsetenv("LLM_API_BASE");
    ::unsetenv("LLM_MODEL");
    CHECK_THROWS_AS(LlmPlanner(LlmConfig{"localhost", "", "m"}), Error);
}

TEST_CASE("llm planner retries transport failures") {
    std::atomic<int> calls{0};
    MockServer mock([&](const httplib::Request& req, httplib::Response& res) {
        const int n = ++calls;
        if (n < 3) {
            res.status = 503;
            return;
        }
        const Json body = Json::parse(req.body);
        CHECK(body["model"] == "mock");
        CHECK(body["messages"][0]["role"] == "system");
        res.set_content(completion("TERMINATE"), "application/json");
    });
    LlmPlanner planner(mock.config());
    const auto reg = standard_registry();
    SessionState state = run_session({"hello", {}}, planner, reg);
    CHECK(calls == 3);
    REQUIRE(state.transcript.size() == 1);
    CHECK(state.transcript[0].terminal());
    CHECK(state.transcript[0].warnings.size() == 2);
    CHECK(state.status == SessionStatus::Terminated);
}

TEST_CASE("llm planner gives up after three attempts") {
    std::atomic<int> calls{0};
    MockServer mock([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 500;
    });
    LlmPlanner planner(mock.config());
    const auto reg = standard_registry();
    SessionState state = run_session({"hello", {}}, planner, reg);
    CHECK(calls == 3);
    CHECK(state.status == SessionStatus::Failed);
    REQUIRE(state.transcript.size() == 1);
    REQUIRE(state.transcript[0].feedback.error);
    CHECK(state.transcript[0].feedback.error->code == ErrorCode::TransportError);
}

TEST_CASE("llm planner reprompts a malformed block once, then records a failed step") {
    std::atomic<int> calls{0};
    std::string reprompt;
    MockServer mock([&](const httplib::Request& req, httplib::Response& res) {
        const int n = ++calls;
        const Json body = Json::parse(req.body);
        if (n == 2) {
            reprompt = body["messages"].back()["content"].get<std::string>();
        }
        if (n <= 2) {
            res.set_content(completion("Plan: draw\n```action\naddGeometry(type=\n```"), "application/json");
        } else {
            res.set_content(completion("TERMINATE"), "application/json");
        }
    });
    LlmPlanner planner(mock.config());
    const auto reg = standard_registry();
    SessionState state = run_session({"hello", {}}, planner, reg);
    CHECK(calls == 3);
    REQUIRE(state.transcript.size() == 2);
    CHECK(state.transcript[0].feedback.error->code == ErrorCode::PlannerUnparseable);
    CHECK(reprompt.find("could not be parsed") != std::string::npos);
    CHECK(reprompt.find("```action") != std::string::npos);
    CHECK(state.transcript[1].terminal());
}

TEST_CASE("llm requests attach images as data URLs") {
    const auto reg = standard_registry();
    SessionState state = start_session({"look", {{AttachmentKind::Image, kFixtures / "bracket.png"}}});
    LlmConfig cfg{"http://127.0.0.1:1/v1", "", "m"};
    const Json with = LlmPlanner(cfg).build_request({state, reg, 0, std::nullopt, std::nullopt});
    const Json& parts = with["messages"][1]["content"];
    REQUIRE(parts.is_array());
    CHECK(parts[1]["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,iVBORw0KGgo", 0) == 0);
    cfg.multimodal = false;
    const Json without = LlmPlanner(cfg).build_request({state, reg, 0, std::nullopt, std::nullopt});
    CHECK(without["messages"][1]["content"].is_string());
}

} // TEST_SUITE
