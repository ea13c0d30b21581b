#include "cadkit/agent.hpp"
#include "cadkit/config.hpp"
#include "cadkit/llm.hpp"
#include "cadkit/mesh.hpp"
#include "cadkit/metrics.hpp"
#include "cadkit/render.hpp"
#include "cadkit/section.hpp"
#include "cadkit/serialization.hpp"
#include "cadkit/service.hpp"
#include "cadkit/solid.hpp"
#include "cadkit/solver.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <pthread.h>
#include <thread>
#include <unistd.h>

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace cadkit::cli {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

bool color_enabled() {
    const char* no_color = std::getenv("NO_COLOR");
    return isatty(STDERR_FILENO) && (no_color == nullptr || *no_color == '\0');
}

void print_error(const std::string& msg) {
    if (color_enabled()) {
        std::cerr << "\x1b[31merror:\x1b[0m " << msg << "\n";
    } else {
        std::cerr << "error: " << msg << "\n";
    }
}

/// Shortest round-trip form, always with a decimal point or exponent.
std::string number_text(double v) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, end);
    if (std::isfinite(v) && s.find_first_of(".e") == std::string::npos) {
        s += ".0";
    }
    return s;
}

struct Common {
    std::optional<fs::path> config_path;
    bool json = false;
};

Config config_of(const Common& c) { return resolve_config(c.config_path); }

// ---------------------------------------------------------------------------

struct SolveArgs {
    fs::path in, out;
};

int run_solve(const Common& common, const SolveArgs& a) {
    const Config cfg = config_of(common);
    const SolveResult r = solve(load_sketch(a.in), cfg.solve());
    write_text_file(a.out, to_document(r.solved));
    const Json summary{{"converged", r.converged},
                       {"residual_norm", r.residual_norm},
                       {"iterations", r.iterations},
                       {"max_displacement", r.max_displacement}};
    if (common.json) {
        std::cout << summary.dump(2) << "\n";
    } else {
        std::cout << "converged: " << (r.converged ? "yes" : "no") << "\nresidual_norm: " << number_text(r.residual_norm)
                  << "\niterations: " << r.iterations << "\nmax_displacement: " << number_text(r.max_displacement)
                  << "\n";
    }
    if (!r.converged) {
        print_error("solver did not converge; wrote the best iterate to " + a.out.string());
        return 1;
    }
    return 0;
}

struct CheckArgs {
    fs::path in;
    std::string spec;
};

Json report_json(const ConstraintReport& r) {
    return Json{{"valid", r.valid},
                {"causes_movement", r.causes_movement},
                {"degenerate", r.degenerate},
                {"residual_before", r.residual_before},
                {"residual_after", r.residual_after},
                {"max_displacement", r.max_displacement},
                {"converged", r.converged}};
}

int run_check(const Common& common, const CheckArgs& a) {
    Constraint c;
    try {
        c = parse_constraint_spec(a.spec);
    } catch (const Error& e) {
        throw UsageError(std::string("--constraint: ") + e.what());
    }
    const Config cfg = config_of(common);
    const ConstraintReport r = check_constraint(load_sketch(a.in), c, cfg.checker);
    std::cout << report_json(r).dump(2) << "\n";
    return 0;
}

struct SerializeArgs {
    fs::path in;
    std::optional<fs::path> out;
    std::string format = "json";
    std::string strategy = "point_based";
    std::optional<int> precision;
};

int run_serialize(const Common& common, const SerializeArgs& a) {
    const Config cfg = config_of(common);
    SerializationConfig sc;
    sc.format = *parse_format_name(a.format);
    sc.strategy = *parse_strategy_name(a.strategy);
    sc.float_precision = a.precision.value_or(cfg.float_precision);
    const std::string text = serialize(load_sketch(a.in), sc);
    if (a.out) {
        write_text_file(*a.out, text);
    } else {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') {
            std::cout << "\n";
        }
    }
    return 0;
}

struct RenderArgs {
    fs::path in, out;
    bool marks = false;
    std::optional<int> size;
};

int run_render(const Common& common, const RenderArgs& a) {
    const Config cfg = config_of(common);
    const int size = a.size.value_or(cfg.image_size);
    const SketchGraph sketch = load_sketch(a.in);
    if (a.out.extension() == ".svg") {
        write_text_file(a.out, render_sketch_svg(sketch, a.marks, size, size));
        return 0;
    }
    const SketchRender r = render_sketch(sketch, size, size, a.marks);
    write_image(a.out, a.marks ? display_image(r) : to_gray(r.mask));
    return 0;
}

struct RenderSolidArgs {
    fs::path in, out;
    std::optional<int> size;
};

int run_render_solid(const Common& common, const RenderSolidArgs& a) {
    const Config cfg = config_of(common);
    const int size = a.size.value_or(cfg.image_size);
    const auto views = render_solid_views(load_solid(a.in), size, size);
    fs::create_directories(a.out);
    const SolidView order[] = {SolidView::Front, SolidView::Right, SolidView::Top, SolidView::Isometric};
    for (std::size_t i = 0; i < views.size(); ++i) {
        const fs::path p = a.out / (std::string(solid_view_name(order[i])) + ".png");
        write_png(p, to_gray(views[i]));
        std::cout << p.string() << "\n";
    }
    return 0;
}

struct SectionArgs {
    std::optional<fs::path> mesh, solid;
    std::vector<double> plane;
    fs::path out;
};

int run_section(const Common& common, const SectionArgs& a) {
    if (a.mesh.has_value() == a.solid.has_value()) {
        throw UsageError("give exactly one of --mesh or --solid");
    }
    const SectionPlane plane = SectionPlane::make(Vec3{a.plane[0], a.plane[1], a.plane[2]},
                                                  Vec3{a.plane[3], a.plane[4], a.plane[5]});
    SectionPolygon poly;
    int open_chains = 0;
    if (a.mesh) {
        const MeshSection ms = cross_section_mesh(read_mesh(*a.mesh), plane);
        poly = ms.polygon;
        open_chains = ms.open_chains;
    } else {
        poly = cross_section_solid(load_solid(*a.solid), plane);
    }
    Json j = section_to_json(poly, plane);
    j["open_chains"] = open_chains;
    if (a.out.extension() == ".png") {
        write_png(a.out, to_gray(section_image(poly)));
    } else {
        write_text_file(a.out, j.dump(2) + "\n");
    }
    if (common.json) {
        std::cout << Json{{"area", poly.area()}, {"perimeter", poly.perimeter()}, {"loops", poly.loops.size()},
                          {"open_chains", open_chains}}
                         .dump(2)
                  << "\n";
    } else {
        std::cout << "area: " << number_text(poly.area()) << "\nperimeter: " << number_text(poly.perimeter())
                  << "\nloops: " << poly.loops.size() << "\n";
        if (open_chains > 0) {
            std::cout << "open_chains: " << open_chains << "\n";
        }
    }
    return 0;
}

struct BenchArgs {
    fs::path gt, pred;
    std::optional<fs::path> out;
};

int run_bench(const Common& common, const BenchArgs& a, bool autoconstrain) {
    const Config cfg = config_of(common);
    const auto pairs = load_benchmark(a.gt, a.pred);
    const EvalReport report =
        autoconstrain ? run_autoconstrain_eval(pairs) : run_param_eval(pairs, cfg.image_size);
    if (a.out) {
        write_text_file(*a.out, report.to_json().dump(2) + "\n");
    }
    std::cout << (common.json ? report.to_json().dump(2) + "\n" : report.to_table());
    return 0;
}

int run_qa(const Common& common, const fs::path& file) {
    const QAReport r = score_qa(parse_qa_jsonl(read_text_file(file)));
    if (common.json) {
        std::cout << r.to_json().dump(2) << "\n";
    } else {
        std::cout << "accuracy: " << number_text(r.accuracy) << "\ncorrect: " << r.correct << "/" << r.total << "\n";
        if (!r.unanswered.empty()) {
            std::cout << "unanswered: " << r.unanswered.size() << "\n";
        }
    }
    return 0;
}

int run_chamfer(const Common& common, const fs::path& a, const fs::path& b) {
    const double cd = chamfer(to_mask(read_image(a)), to_mask(read_image(b)));
    if (common.json) {
        std::cout << Json{{"chamfer", cd}}.dump() << "\n";
    } else {
        std::cout << number_text(cd) << "\n";
    }
    return 0;
}

struct AgentArgs {
    std::string planner;
    std::optional<std::string> query;
    std::vector<fs::path> attach;
    fs::path out;
    std::optional<int> budget;
    std::optional<fs::path> artifacts;
};

int run_agent(const Common& common, const AgentArgs& a) {
    const Config cfg = config_of(common);
    std::unique_ptr<agent::Planner> planner = service::default_planner(a.planner);
    agent::Query query;
    if (a.planner.rfind("scripted:", 0) == 0) {
        query = agent::ScriptedPlanner::query_from_file(a.planner.substr(9));
    }
    if (a.query) {
        query.text = *a.query;
    }
    if (!a.attach.empty()) {
        query.attachments.clear();
        for (const auto& p : a.attach) {
            query.attachments.push_back(agent::Attachment{agent::attachment_kind_for(p), p});
        }
    }
    if (query.text.empty()) {
        throw UsageError("--query is required unless the fixture provides one");
    }
    agent::SessionState state = agent::start_session(std::move(query), a.budget.value_or(cfg.step_budget));
    if (a.artifacts) {
        state.artifact_dir = *a.artifacts;
    }
    const agent::ToolRegistry tools = agent::standard_registry();
    agent::run_session(state, *planner, tools);
    write_text_file(a.out, agent::transcript_jsonl(state.transcript));

    const Json summary{{"status", agent::status_name(state.status)},
                       {"steps", state.transcript.size()},
                       {"flagged", state.flagged}};
    if (common.json) {
        std::cout << summary.dump(2) << "\n";
    } else {
        std::cout << "status: " << agent::status_name(state.status) << "\nsteps: " << state.transcript.size() << "\n";
        if (state.flagged) {
            std::cout << "flagged: context assertion failed\n";
        }
    }
    for (const auto& rec : state.transcript) {
        for (const auto& w : rec.warnings) {
            std::cerr << "warning: step " << rec.step << ": " << w << "\n";
        }
    }
    if (state.status == agent::SessionStatus::Failed) {
        const auto& last = state.transcript.back();
        print_error(last.feedback.error ? last.feedback.error->message : "run failed");
        return 1;
    }
    return 0;
}

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    fs::path data_dir = "data";
};

int run_serve(const Common& common, const ServeArgs& a) {
    const Config cfg = config_of(common);
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    service::ServiceConfig sc;
    sc.data_dir = a.data_dir;
    sc.step_budget = cfg.step_budget;
    service::Service svc(sc);
    service::HttpServer server(svc);
    const int port = server.bind(a.host, a.port);
    std::cout << "listening on http://" << a.host << ":" << port << " (data: " << a.data_dir.string() << ")"
              << std::endl;
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    server.listen();
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    svc.shutdown();
    return 0;
}

const CLI::App* deepest(const CLI::App* app) {
    const auto subs = app->get_subcommands();
    return subs.empty() ? app : deepest(subs.front());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parametric sketch kernel, solids, evaluation and agent tools.", "cadkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "cadkit 0.1.0");
    Common common;
    app.add_option("--config", common.config_path, "Settings file (default: $CADKIT_CONFIG or ./cadkit.toml)")
        ->check(CLI::ExistingFile);

    const std::vector<std::string> formats{"json", "csv", "markdown", "html"};
    const std::vector<std::string> strategies{"implicit", "point_based", "overparameterized"};

    SolveArgs solve_args;
    auto* solve_cmd = app.add_subcommand("solve", "Solve a sketch's constraints");
    solve_cmd->add_option("IN", solve_args.in, "Sketch document")->required()->check(CLI::ExistingFile);
    solve_cmd->add_option("-o,--output", solve_args.out, "Solved sketch document")->required();
    solve_cmd->add_flag("--json", common.json, "Print the summary as JSON");

    CheckArgs check_args;
    auto* check_cmd = app.add_subcommand("check", "Report whether adding a constraint is valid and moves geometry");
    check_cmd->add_option("IN", check_args.in, "Sketch document")->required()->check(CLI::ExistingFile);
    check_cmd->add_option("--constraint", check_args.spec, "e.g. coincident(0.end, 1.start) or horizontal(2)")
        ->required();

    SerializeArgs ser_args;
    auto* ser_cmd = app.add_subcommand("serialize", "Print a sketch in a text format");
    ser_cmd->add_option("IN", ser_args.in, "Sketch document")->required()->check(CLI::ExistingFile);
    ser_cmd->add_option("--format", ser_args.format, "Output format")->check(CLI::IsMember(formats))
        ->capture_default_str();
    ser_cmd->add_option("--strategy", ser_args.strategy, "Parameterization")->check(CLI::IsMember(strategies))
        ->capture_default_str();
    ser_cmd->add_option("--precision", ser_args.precision, "Significant decimals")->check(CLI::Range(1, 17));
    ser_cmd->add_option("-o,--output", ser_args.out, "Write here instead of stdout");

    RenderArgs render_args;
    auto* render_cmd = app.add_subcommand("render", "Rasterize a sketch (PNG/PGM) or write SVG");
    render_cmd->add_option("IN", render_args.in, "Sketch document")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("-o,--output", render_args.out, "Output image (.png, .pgm or .svg)")->required();
    render_cmd->add_flag("--marks", render_args.marks, "Draw primitive id markers");
    render_cmd->add_option("--size", render_args.size, "Canvas size in pixels")->check(CLI::Range(8, 8192));

    RenderSolidArgs rsolid_args;
    auto* rsolid_cmd = app.add_subcommand("render-solid", "Write front, right, top and isometric views of a solid");
    rsolid_cmd->add_option("IN", rsolid_args.in, "Solid document")->required()->check(CLI::ExistingFile);
    rsolid_cmd->add_option("-o,--output", rsolid_args.out, "Output directory")->required();
    rsolid_cmd->add_option("--size", rsolid_args.size, "Canvas size in pixels")->check(CLI::Range(8, 8192));

    SectionArgs section_args;
    auto* section_cmd = app.add_subcommand("section", "Cut a mesh or solid with a plane");
    section_cmd->add_option("--mesh", section_args.mesh, "OBJ or STL mesh")->check(CLI::ExistingFile);
    section_cmd->add_option("--solid", section_args.solid, "Solid document")->check(CLI::ExistingFile);
    section_cmd->add_option("--plane", section_args.plane, "ox,oy,oz,nx,ny,nz")
        ->required()
        ->delimiter(',')
        ->expected(6);
    section_cmd->add_option("-o,--output", section_args.out, "Section JSON, or .png for an image")->required();
    section_cmd->add_flag("--json", common.json, "Print the summary as JSON");

    auto* eval_cmd = app.add_subcommand("eval", "Benchmark metrics");
    eval_cmd->require_subcommand(1);
    BenchArgs ac_args;
    auto* ac_cmd = eval_cmd->add_subcommand("autoconstrain", "PF1/CF1 of predicted constraints");
    ac_cmd->add_option("--gt", ac_args.gt, "Ground-truth sketches")->required()->check(CLI::ExistingDirectory);
    ac_cmd->add_option("--pred", ac_args.pred, "Predicted sketches")->required()->check(CLI::ExistingDirectory);
    ac_cmd->add_option("-o,--output", ac_args.out, "Report JSON");
    ac_cmd->add_flag("--json", common.json, "Print the report as JSON");
    BenchArgs param_args;
    auto* param_cmd = eval_cmd->add_subcommand("param", "Token accuracy and chamfer distance of parameterizations");
    param_cmd->add_option("--gt", param_args.gt, "Ground-truth sketches")->required()->check(CLI::ExistingDirectory);
    param_cmd->add_option("--pred", param_args.pred, "Predicted sketches")->required()->check(CLI::ExistingDirectory);
    param_cmd->add_option("-o,--output", param_args.out, "Report JSON");
    param_cmd->add_flag("--json", common.json, "Print the report as JSON");
    fs::path qa_file;
    auto* qa_cmd = eval_cmd->add_subcommand("qa", "Multiple-choice accuracy of a JSONL answer file");
    qa_cmd->add_option("FILE", qa_file, "JSONL items")->required()->check(CLI::ExistingFile);
    qa_cmd->add_flag("--json", common.json, "Print the report as JSON");
    fs::path cd_a, cd_b;
    auto* cd_cmd = eval_cmd->add_subcommand("chamfer", "Symmetric chamfer distance of two binary images");
    cd_cmd->add_option("A", cd_a, "First image")->required()->check(CLI::ExistingFile);
    cd_cmd->add_option("B", cd_b, "Second image")->required()->check(CLI::ExistingFile);
    cd_cmd->add_flag("--json", common.json, "Print as JSON");

    auto* agent_cmd = app.add_subcommand("agent", "Agent sessions");
    agent_cmd->require_subcommand(1);
    AgentArgs agent_args;
    auto* run_cmd = agent_cmd->add_subcommand("run", "Run one session and write its transcript");
    run_cmd->add_option("--planner", agent_args.planner, "scripted:FIXTURE or llm")->required();
    run_cmd->add_option("--query", agent_args.query, "User request (defaults to the fixture's)");
    run_cmd->add_option("--attach", agent_args.attach, "Attachment (repeatable)")->check(CLI::ExistingFile);
    run_cmd->add_option("-o,--output", agent_args.out, "Transcript JSONL")->required();
    run_cmd->add_option("--budget", agent_args.budget, "Step budget")->check(CLI::PositiveNumber);
    run_cmd->add_option("--artifacts", agent_args.artifacts, "Directory for image artifacts");
    run_cmd->add_flag("--json", common.json, "Print the summary as JSON");

    ServeArgs serve_args;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP session service");
    serve_cmd->add_option("--host", serve_args.host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--port", serve_args.port, "Port (0 picks a free one)")
        ->check(CLI::Range(0, 65535))
        ->capture_default_str();
    serve_cmd->add_option("--data-dir", serve_args.data_dir, "Session storage")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error(e.what());
        std::cerr << deepest(&app)->help();
        return 2;
    }

    try {
        if (*solve_cmd) return run_solve(common, solve_args);
        if (*check_cmd) return run_check(common, check_args);
        if (*ser_cmd) return run_serialize(common, ser_args);
        if (*render_cmd) return run_render(common, render_args);
        if (*rsolid_cmd) return run_render_solid(common, rsolid_args);
        if (*section_cmd) return run_section(common, section_args);
        if (*ac_cmd) return run_bench(common, ac_args, true);
        if (*param_cmd) return run_bench(common, param_args, false);
        if (*qa_cmd) return run_qa(common, qa_file);
        if (*cd_cmd) return run_chamfer(common, cd_a, cd_b);
        if (*run_cmd) return run_agent(common, agent_args);
        if (*serve_cmd) return run_serve(common, serve_args);
    } catch (const UsageError& e) {
        print_error(e.what());
        std::cerr << deepest(&app)->help();
        return 2;
    } catch (const Error& e) {
        print_error(std::string(error_code_name(e.code())) + ": " + e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error(e.what());
        return 1;
    }
    return 2;
}

} // namespace cadkit::cli

int main(int argc, char** argv) { return cadkit::cli::main(argc, argv); }
