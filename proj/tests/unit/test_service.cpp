#include <doctest.h>

#include "agent_replay.hpp"
#include "cadkit/serialization.hpp"
#include "cadkit/service.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

using namespace cadkit;
using namespace cadkit::service;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(CADKIT_SOURCE_DIR) / "tests/fixtures/agent";
const fs::path kGolden = fs::path(CADKIT_SOURCE_DIR) / "tests/golden";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("cadkit_service_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

/// Releases one planner reply per allow(); replies add a line, then TERMINATE.
struct Gate {
    std::mutex m;
    std::condition_variable cv;
    int allowed = 0;
    int served = 0;
    int actions = 2;

    void allow(int n) {
        std::lock_guard lk(m);
        allowed += n;
        cv.notify_all();
    }
};

class GatedPlanner : public agent::Planner {
public:
    explicit GatedPlanner(std::shared_ptr<Gate> gate) : gate_(std::move(gate)) {}

    agent::PlannerReply respond(const agent::PlannerRequest&) override {
        std::unique_lock lk(gate_->m);
        gate_->cv.wait(lk, [&] { return gate_->allowed > gate_->served; });
        const int k = gate_->served++;
        agent::PlannerReply r;
        if (k >= gate_->actions) {
            r.text = "TERMINATE";
        } else {
            const std::string x = std::to_string(k);
            r.text = "Plan: add line " + x + "\n```action\naddGeometry(type=\"line\", start=[" + x + ", 0], end=[" + x +
                     ", 1])\n```";
        }
        return r;
    }

private:
    std::shared_ptr<Gate> gate_;
};

ServiceConfig config_for(const fs::path& dir, std::shared_ptr<Gate> gate = nullptr) {
    ServiceConfig cfg;
    cfg.data_dir = dir;
    cfg.planner_factory = [gate](const std::string& choice) -> std::unique_ptr<agent::Planner> {
        if (choice == "gated" && gate) {
            return std::make_unique<GatedPlanner>(gate);
        }
        return default_planner(choice);
    };
    return cfg;
}

std::vector<Event> all_events(const Service& svc, const std::string& id) {
    return svc.events_after(id, 0, std::chrono::milliseconds(0)).events;
}

std::string scripted(const std::string& name) { return "scripted:" + (kFixtures / name).string(); }

std::size_t session_dirs(const fs::path& data) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(data / "sessions")) {
        (void)e;
        ++n;
    }
    return n;
}

struct SseEvent {
    std::uint64_t id = 0;
    std::string type;
    Json data;
};

/// Incremental text/event-stream parser.
struct SseReader {
    std::string buffer;
    std::vector<SseEvent> events;

    void feed(const char* data, std::size_t n) {
        buffer.append(data, n);
        std::size_t end;
        while ((end = buffer.find("\n\n")) != std::string::npos) {
            const std::string frame = buffer.substr(0, end);
            buffer.erase(0, end + 2);
            SseEvent ev;
            bool any = false;
            std::istringstream lines(frame);
            std::string line;
            while (std::getline(lines, line)) {
                if (line.rfind("id: ", 0) == 0) {
                    ev.id = std::stoull(line.substr(4));
                    any = true;
                } else if (line.rfind("event: ", 0) == 0) {
                    ev.type = line.substr(7);
                } else if (line.rfind("data: ", 0) == 0) {
                    ev.data = Json::parse(line.substr(6));
                }
            }
            if (any) {
                events.push_back(std::move(ev));
            }
        }
    }
};

std::string base64(const std::string& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

} // namespace

TEST_SUITE("service") {

TEST_CASE("sessions start empty or from an attached sketch") {
    TempDir tmp;
    Service svc(config_for(tmp.path));

    const std::string empty = svc.create_session({});
    const Json s0 = svc.state(empty);
    CHECK(s0["status"] == "Idle");
    CHECK(s0["document"]["sketch"]["primitives"].empty());
    CHECK(s0["transcript"].empty());
    CHECK(svc.render_svg(empty).find("<svg") != std::string::npos);

    const std::string text = slurp(kFixtures / "dshape.sketch.json");
    const std::string id = svc.create_session({UploadedFile{"dshape.sketch.json", text}});
    CHECK(id != empty);
    const Json s1 = svc.state(id);
    CHECK(s1["document"]["sketch"] == Json::parse(to_document(load_sketch(kFixtures / "dshape.sketch.json"))));
    CHECK(s1["attachments"] == Json::array({"dshape.sketch.json"}));
    CHECK(fs::is_regular_file(tmp.path / "sessions" / id / "attachments" / "dshape.sketch.json"));
}

TEST_CASE("rejected attachments leave no session behind") {
    TempDir tmp;
    Service svc(config_for(tmp.path));
    auto code_of = [&](const std::vector<UploadedFile>& files) {
        try {
            svc.create_session(files);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::InvariantViolation;
    };
    CHECK(code_of({UploadedFile{"broken.sketch.json", "{\"primitives\": [nope"}}) == ErrorCode::InvalidAttachment);
    CHECK(code_of({UploadedFile{"../escape.sketch.json", "{}"}}) == ErrorCode::InvalidAttachment);
    CHECK(code_of({UploadedFile{"big.png", std::string(kMaxAttachmentBytes + 1, 'x')}}) ==
          ErrorCode::AttachmentTooLarge);
    CHECK(code_of({UploadedFile{"a.txt", "x"}, UploadedFile{"a.txt", "y"}}) == ErrorCode::InvalidAttachment);
    CHECK(svc.session_ids().empty());
    CHECK(session_dirs(tmp.path) == 0);
}

TEST_CASE("a scripted run streams one event per step and then the final status") {
    TempDir tmp;
    Service svc(config_for(tmp.path));
    const std::string id =
        svc.create_session({UploadedFile{"dshape.sketch.json", slurp(kFixtures / "dshape.sketch.json")}});
    svc.post_message(id, "add the constraints", scripted("autoconstrain.fixture.json"));
    svc.wait_until_settled(id);
    CHECK(svc.status(id) == agent::SessionStatus::Terminated);

    const auto events = all_events(svc, id);
    REQUIRE(events.size() == 5);
    for (std::size_t i = 0; i < events.size(); ++i) {
        CHECK(events[i].id == i + 1);
    }
    for (int i = 0; i < 4; ++i) {
        CHECK(events[i].type == "step");
        CHECK(events[i].data["step"] == i);
    }
    CHECK(events[4].type == "status");
    CHECK(events[4].data["status"] == "Terminated");

    const Json st = svc.state(id);
    std::vector<agent::StepRecord> transcript;
    for (const auto& j : st["transcript"]) {
        transcript.push_back(agent::step_from_json(j));
    }
    CHECK(agent::transcript_jsonl(transcript) == slurp(kGolden / "agent_autoconstrain.transcript.jsonl"));
    CHECK(slurp(tmp.path / "sessions" / id / "transcript.jsonl") == agent::transcript_jsonl(transcript));
    CHECK(st["flagged"] == false);

    const auto batch = svc.events_after(id, 5, std::chrono::milliseconds(0));
    CHECK(batch.events.empty());
    CHECK(batch.finished);
    CHECK(svc.events_after(id, 3, std::chrono::milliseconds(0)).events.front().id == 4);
}

TEST_CASE("unknown sessions and planner configuration errors are reported before any step") {
    TempDir tmp;
    Service svc(config_for(tmp.path));
    CHECK_THROWS_AS(svc.state("0123abcd"), Error);
    try {
        svc.post_message("0123abcd", "hi", "llm");
        FAIL("expected UnknownSession");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownSession);
        CHECK(http_status(e.code()) == 404);
    }

    const std::string id = svc.create_session({});
    for (const std::string choice : {"scripted:/no/such/fixture.json", "carrier-pigeon"}) {
        try {
            svc.post_message(id, "hi", choice);
            FAIL("expected PlannerConfig");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::PlannerConfig);
        }
    }
    CHECK(svc.status(id) == agent::SessionStatus::Idle);
    CHECK(all_events(svc, id).empty());
}

TEST_CASE("a message while a run is in flight is refused and numbering continues across runs") {
    TempDir tmp;
    auto gate = std::make_shared<Gate>();
    Service svc(config_for(tmp.path, gate));
    const std::string id = svc.create_session({});
    svc.post_message(id, "draw", "gated");
    CHECK(svc.status(id) == agent::SessionStatus::Running);
    try {
        svc.post_message(id, "again", "gated");
        FAIL("expected SessionBusy");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SessionBusy);
        CHECK(http_status(e.code()) == 409);
    }

    gate->allow(1);
    const auto first = svc.events_after(id, 0, std::chrono::seconds(10));
    REQUIRE(first.events.size() == 1);
    CHECK(first.events[0].data["step"] == 0);
    CHECK_FALSE(first.finished);
    CHECK(svc.state(id)["document"]["sketch"]["primitives"].size() == 1);

    gate->allow(2);
    svc.wait_until_settled(id);
    CHECK(all_events(svc, id).size() == 4);

    {
        std::lock_guard lk(gate->m);
        gate->served = 0;
        gate->allowed = 0;
        gate->actions = 1;
    }
    gate->allow(2);
    svc.post_message(id, "one more", "gated");
    svc.wait_until_settled(id);
    const auto events = all_events(svc, id);
    REQUIRE(events.size() == 7);
    std::vector<int> steps;
    for (std::size_t i = 0; i < events.size(); ++i) {
        CHECK(events[i].id == i + 1);
        if (events[i].type == "step") {
            steps.push_back(events[i].data["step"].get<int>());
        }
    }
    CHECK(steps == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(svc.state(id)["document"]["sketch"]["primitives"].size() == 3);
}

TEST_CASE("sessions survive a restart") {
    TempDir tmp;
    std::string id;
    Json before;
    std::vector<Event> events_before;
    {
        Service svc(config_for(tmp.path));
        id = svc.create_session({UploadedFile{"dshape.sketch.json", slurp(kFixtures / "dshape.sketch.json")}});
        svc.post_message(id, "add the constraints", scripted("autoconstrain.fixture.json"));
        svc.wait_until_settled(id);
        before = svc.state(id);
        events_before = all_events(svc, id);
    }
    {
        Service svc(config_for(tmp.path));
        CHECK(svc.session_ids() == std::vector<std::string>{id});
        CHECK(svc.state(id) == before);
        const auto events = all_events(svc, id);
        REQUIRE(events.size() == events_before.size());
        for (std::size_t i = 0; i < events.size(); ++i) {
            CHECK(events[i].id == events_before[i].id);
            CHECK(events[i].type == events_before[i].type);
            CHECK(events[i].data == events_before[i].data);
        }
        CHECK(svc.artifact_path(id, "step0.call0.sketch.png").filename() == "step0.call0.sketch.png");
    }

    const fs::path meta = tmp.path / "sessions" / id / "session.json";
    Json j = Json::parse(slurp(meta));
    j["status"] = "Running";
    std::ofstream(meta) << j.dump(2);
    Service svc(config_for(tmp.path));
    CHECK(svc.status(id) == agent::SessionStatus::Failed);
    const auto events = all_events(svc, id);
    CHECK(events.back().id == events_before.size() + 1);
    CHECK(events.back().data["reason"] == "interrupted");
}

TEST_CASE("http front end") {
    TempDir tmp;
    auto gate = std::make_shared<Gate>();
    Service svc(config_for(tmp.path, gate));
    HttpServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    std::thread loop([&] { server.listen(); });
    server.wait_until_ready();
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(10, 0);

    auto health = cli.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 200);

    const Json bad{{"attachments", Json::array({Json{{"name", "x.sketch.json"}, {"content", "nope"}}})}};
    auto rejected = cli.Post("/sessions", bad.dump(), "application/json");
    REQUIRE(rejected);
    CHECK(rejected->status == 400);
    CHECK(Json::parse(rejected->body)["code"] == "InvalidAttachment");

    const Json good{{"attachments", Json::array({Json{{"name", "dshape.sketch.json"},
                                                      {"content", base64(slurp(kFixtures / "dshape.sketch.json"))},
                                                      {"encoding", "base64"}}})}};
    auto created = cli.Post("/sessions", good.dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const std::string id = Json::parse(created->body)["session_id"];
    CHECK(svc.state(id)["document"]["sketch"]["primitives"].size() == 4);

    auto missing = cli.Get("/sessions/0123abcd/state");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(Json::parse(missing->body)["code"] == "UnknownSession");

    auto svg = cli.Get("/sessions/" + id + "/render.svg");
    REQUIRE(svg);
    CHECK(svg->get_header_value("Content-Type") == "image/svg+xml");
    CHECK(svg->body.find("<svg") != std::string::npos);

    const std::string messages = "/sessions/" + id + "/messages";
    auto posted = cli.Post(messages, Json{{"text", "draw"}, {"planner", "gated"}}.dump(), "application/json");
    REQUIRE(posted);
    CHECK(posted->status == 202);
    auto busy = cli.Post(messages, Json{{"text", "draw"}, {"planner", "gated"}}.dump(), "application/json");
    REQUIRE(busy);
    CHECK(busy->status == 409);
    CHECK(Json::parse(busy->body)["code"] == "SessionBusy");

    gate->allow(1);
    SseReader first;
    httplib::Client stream1("127.0.0.1", port);
    stream1.set_read_timeout(10, 0);
    stream1.Get("/sessions/" + id + "/events", [&](const char* data, std::size_t n) {
        first.feed(data, n);
        return first.events.empty();
    });
    REQUIRE(first.events.size() == 1);
    CHECK(first.events[0].id == 1);
    CHECK(first.events[0].data["step"] == 0);

    gate->allow(2);
    SseReader rest;
    httplib::Client stream2("127.0.0.1", port);
    stream2.set_read_timeout(10, 0);
    auto tail = stream2.Get("/sessions/" + id + "/events", httplib::Headers{{"Last-Event-ID", "1"}},
                            [&](const char* data, std::size_t n) {
                                rest.feed(data, n);
                                return true;
                            });
    REQUIRE(tail);
    CHECK(tail->get_header_value("Content-Type") == "text/event-stream");
    REQUIRE(rest.events.size() == 3);
    CHECK(rest.events[0].id == 2);
    CHECK(rest.events[0].data["step"] == 1);
    CHECK(rest.events[1].data["step"] == 2);
    CHECK(rest.events[2].type == "status");
    CHECK(rest.events[2].data["status"] == "Terminated");

    SseReader replay;
    auto full = cli.Get("/sessions/" + id + "/events", [&](const char* data, std::size_t n) {
        replay.feed(data, n);
        return true;
    });
    REQUIRE(full);
    CHECK(replay.events.size() == 4);

    auto state = cli.Get("/sessions/" + id + "/state");
    REQUIRE(state);
    const Json st = Json::parse(state->body);
    CHECK(st["status"] == "Terminated");
    CHECK(st["transcript"].size() == 3);
    CHECK(st["document"]["sketch"]["primitives"].size() == 6);

    server.stop();
    loop.join();
}

} // TEST_SUITE
