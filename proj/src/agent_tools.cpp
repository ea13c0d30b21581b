#include "cadkit/agent.hpp"
#include "cadkit/params.hpp"
#include "cadkit/render.hpp"
#include "cadkit/section.hpp"
#include "cadkit/serialization.hpp"
#include "cadkit/solver.hpp"

#include <algorithm>
#include <cmath>

namespace cadkit::agent {

namespace {

[[noreturn]] void bad(std::string_view name, const std::string& what) {
    throw Error(ErrorCode::BadArgument, "argument '" + std::string(name) + "' " + what);
}

// Six decimals keep transcripts stable across platforms.
Json num(double v) {
    const double r = std::stod(format_number(v, 6));
    return r == 0.0 ? 0.0 : r;
}

Json vec_json(Vec3 v) { return Json::array({num(v.x), num(v.y), num(v.z)}); }

Vec2 as_vec2(std::string_view name, const Json& j) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        bad(name, "must be [x, y]");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

} // namespace

bool Args::has(std::string_view name) const {
    const auto it = values_.find(std::string(name));
    return it != values_.end() && !it->is_null();
}

const Json& Args::raw(std::string_view name) const {
    if (!has(name)) {
        bad(name, "is required");
    }
    return values_.at(std::string(name));
}

double Args::number(std::string_view name) const {
    const Json& j = raw(name);
    if (!j.is_number()) {
        bad(name, "must be a number");
    }
    return j.get<double>();
}

double Args::number(std::string_view name, double fallback) const { return has(name) ? number(name) : fallback; }

long long Args::integer(std::string_view name) const {
    const Json& j = raw(name);
    if (j.is_number_integer()) {
        return j.get<long long>();
    }
    if (j.is_number_float() && std::floor(j.get<double>()) == j.get<double>()) {
        return static_cast<long long>(j.get<double>());
    }
    bad(name, "must be an integer");
}

bool Args::boolean(std::string_view name, bool fallback) const {
    if (!has(name)) {
        return fallback;
    }
    const Json& j = raw(name);
    if (!j.is_boolean()) {
        bad(name, "must be true or false");
    }
    return j.get<bool>();
}

std::string Args::string(std::string_view name) const {
    const Json& j = raw(name);
    if (!j.is_string()) {
        bad(name, "must be a string");
    }
    return j.get<std::string>();
}

std::string Args::string(std::string_view name, std::string fallback) const {
    return has(name) ? string(name) : fallback;
}

Vec2 Args::vec2(std::string_view name) const { return as_vec2(name, raw(name)); }

Vec3 Args::vec3(std::string_view name) const {
    const Json& j = raw(name);
    if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number()) {
        bad(name, "must be [x, y, z]");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Vec3 Args::vec3(std::string_view name, Vec3 fallback) const { return has(name) ? vec3(name) : fallback; }

std::string ToolSpec::signature() const {
    std::string out = name + "(";
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (i) {
            out += ", ";
        }
        out += params[i].name;
        out += params[i].required ? ": " : "?: ";
        out += params[i].type;
    }
    out += ") -> " + returns;
    return out;
}

Artifact ToolContext::image(const std::string& name, const GrayImage& img) {
    Artifact a;
    a.kind = "image";
    a.path = "step" + std::to_string(step) + ".call" + std::to_string(call) + "." + name + ".png";
    a.image = std::make_shared<const GrayImage>(img);
    if (!state.artifact_dir.empty()) {
        std::filesystem::create_directories(state.artifact_dir);
        write_png(state.artifact_dir / a.path, img);
    }
    return a;
}

void ToolRegistry::register_tool(ToolSpec spec, ToolFn fn) {
    if (contains(spec.name)) {
        throw Error(ErrorCode::DuplicateTool, "tool '" + spec.name + "' is already registered");
    }
    if (spec.docstring.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw Error(ErrorCode::EmptyDocstring, "tool '" + spec.name + "' has no docstring");
    }
    fns_.emplace(spec.name, std::move(fn));
    specs_.push_back(std::move(spec));
}

bool ToolRegistry::contains(std::string_view name) const { return fns_.find(name) != fns_.end(); }

const ToolSpec& ToolRegistry::spec(std::string_view name) const {
    for (const auto& s : specs_) {
        if (s.name == name) {
            return s;
        }
    }
    throw Error(ErrorCode::UnknownTool, "no tool named '" + std::string(name) + "'");
}

ToolResult ToolRegistry::invoke(ToolContext& ctx, const std::string& name, const Json& args) const {
    const ToolSpec& s = spec(name);
    for (const auto& [key, value] : args.items()) {
        bool known = false;
        for (const auto& p : s.params) {
            known = known || p.name == key;
        }
        if (!known) {
            throw Error(ErrorCode::BadArgument, name + " has no argument '" + key + "'");
        }
    }
    for (const auto& p : s.params) {
        if (p.required && (!args.contains(p.name) || args[p.name].is_null())) {
            throw Error(ErrorCode::BadArgument, name + " needs argument '" + p.name + "'");
        }
    }
    return fns_.find(name)->second(ctx, Args(args));
}

namespace {

Ref ref_arg(const Args& args, std::string_view name) {
    const Json& j = args.raw(name);
    if (j.is_number_integer() && j.get<long long>() >= 0) {
        return {PrimitiveId{static_cast<std::uint32_t>(j.get<long long>())}, SubRef::Entire};
    }
    if (j.is_string()) {
        try {
            return parse_ref_spec(j.get<std::string>());
        } catch (const Error& e) {
            bad(name, e.what());
        }
    }
    if (j.is_array() && j.size() == 2 && j[0].is_number_integer() && j[0].get<long long>() >= 0 && j[1].is_string()) {
        const auto sub = parse_subref_name(j[1].get<std::string>());
        if (!sub) {
            bad(name, "has an unknown sub-reference");
        }
        return {PrimitiveId{static_cast<std::uint32_t>(j[0].get<long long>())}, *sub};
    }
    bad(name, "must be an id, \"id.subref\" or [id, \"subref\"]");
}

Constraint constraint_arg(const Args& args) {
    const std::string kind_text = args.string("kind");
    const auto kind = parse_kind_name(kind_text);
    if (!kind) {
        bad("kind", "is not a constraint kind: '" + kind_text + "'");
    }
    Constraint c;
    c.kind = *kind;
    c.first = ref_arg(args, "first");
    if (args.has("second")) {
        c.second = ref_arg(args, "second");
    } else if (is_unary(*kind)) {
        c.second = c.first;
    } else {
        bad("second", "is required for " + kind_text);
    }
    return c;
}

Primitive geometry_arg(const Args& args) {
    const std::string type = args.string("type");
    if (type == "line") {
        return Line{args.vec2("start"), args.vec2("end")};
    }
    if (type == "circle") {
        return Circle{args.vec2("center"), args.number("radius")};
    }
    if (type == "arc") {
        if (args.has("mid")) {
            const auto arc = arc_through(args.vec2("start"), args.vec2("mid"), args.vec2("end"));
            if (!arc) {
                throw Error(ErrorCode::DegeneratePrimitive, "arc points are collinear");
            }
            return *arc;
        }
        Arc arc;
        arc.center = args.vec2("center");
        arc.radius = args.number("radius");
        arc.theta_start = args.number("start_angle");
        arc.theta_end = args.number("end_angle");
        arc.clockwise = args.boolean("clockwise", false);
        return canonicalize(arc);
    }
    if (type == "point") {
        return Point{args.vec2("position")};
    }
    bad("type", "must be line, circle, arc or point");
}

Json sketch_summary(const SketchGraph& sketch) {
    SerializationConfig cfg;
    cfg.strategy = Strategy::Overparameterized;
    cfg.float_precision = 6;
    const auto doc = to_json(sketch, cfg);
    Json out;
    out["primitives"] = doc["primitives"];
    Json cons = Json::array();
    for (const auto& c : sketch.constraints()) {
        cons.push_back(constraint_spec(c));
    }
    out["constraints"] = std::move(cons);
    return out;
}

Json report_json(const ConstraintReport& r) {
    return Json{{"valid", r.valid},
                {"causes_movement", r.causes_movement},
                {"degenerate", r.degenerate},
                {"residual_before", num(r.residual_before)},
                {"residual_after", num(r.residual_after)},
                {"max_displacement", num(r.max_displacement)}};
}

const std::filesystem::path& pick_image(const ToolContext& ctx, const Args& args) {
    const auto& images = ctx.state.images;
    if (images.empty()) {
        throw Error(ErrorCode::BadArgument, "the request has no image attachment");
    }
    if (!args.has("image")) {
        return images.front();
    }
    const std::string name = args.string("image");
    for (const auto& p : images) {
        if (p.filename().string() == name || p.string() == name) {
            return p;
        }
    }
    bad("image", "does not name an attached image: '" + name + "'");
}

const std::vector<ToolParam> kRefParams{
    {"kind", "string", true},
    {"first", "ref", true},
    {"second", "ref", false},
};

} // namespace

ToolRegistry standard_registry() {
    ToolRegistry reg;

    reg.register_tool(
        {"addGeometry",
         {{"type", "string", true},
          {"start", "[x, y]", false},
          {"end", "[x, y]", false},
          {"mid", "[x, y]", false},
          {"center", "[x, y]", false},
          {"radius", "number", false},
          {"start_angle", "number", false},
          {"end_angle", "number", false},
          {"clockwise", "bool", false},
          {"position", "[x, y]", false}},
         "int",
         "Adds one primitive to the working sketch and returns its id. Ids are never reused.\n"
         "  type=\"line\": start, end\n"
         "  type=\"circle\": center, radius\n"
         "  type=\"arc\": center, radius, start_angle, end_angle (radians, counter-clockwise unless\n"
         "      clockwise=true), or three points start, mid, end\n"
         "  type=\"point\": position\n"
         "Example: $l = addGeometry(type=\"line\", start=[0, 0], end=[4, 0])"},
        [](ToolContext& ctx, const Args& args) {
            const Primitive p = geometry_arg(args);
            validate_primitive(p);
            const PrimitiveId id = ctx.document().sketch.add_primitive(p);
            return ToolResult{Json(id.index), {}};
        });

    reg.register_tool(
        {"addConstraint", kRefParams, "int",
         "Adds a geometric constraint to the working sketch and returns its index. Geometry does not\n"
         "move until recompute() is called.\n"
         "  kind: coincident, parallel, equal, vertical, horizontal, perpendicular or tangent\n"
         "  first, second: a primitive id, \"id.subref\" or [id, \"subref\"] where subref is start,\n"
         "      end, mid or entire. Omit second for horizontal and vertical.\n"
         "Example: addConstraint(kind=\"coincident\", first=\"0.end\", second=\"1.start\")"},
        [](ToolContext& ctx, const Args& args) {
            const std::size_t index = ctx.document().sketch.add_constraint(constraint_arg(args));
            return ToolResult{Json(index), {}};
        });

    reg.register_tool(
        {"delGeometries",
         {{"ids", "list[int]", true}},
         "int",
         "Deletes the listed primitives and every constraint that references them. Returns how many\n"
         "primitives were removed; unknown ids are skipped.\n"
         "Example: delGeometries(ids=[2, 5])"},
        [](ToolContext& ctx, const Args& args) {
            const Json& list = args.raw("ids");
            if (!list.is_array()) {
                bad("ids", "must be a list of ids");
            }
            std::vector<PrimitiveId> ids;
            for (const auto& v : list) {
                if (!v.is_number_integer() || v.get<long long>() < 0) {
                    bad("ids", "must hold non-negative integers");
                }
                ids.push_back(PrimitiveId{static_cast<std::uint32_t>(v.get<long long>())});
            }
            return ToolResult{Json(ctx.document().sketch.del_geometries(ids)), {}};
        });

    reg.register_tool(
        {"recompute",
         {},
         "{converged, residual_norm, iterations, max_displacement}",
         "Solves the working sketch so that all constraints hold, moving geometry as little as\n"
         "possible. The sketch is updated only when the solver converges.\n"
         "Example: $r = recompute()"},
        [](ToolContext& ctx, const Args&) {
            SolveResult r = solve(ctx.document().sketch);
            if (r.converged) {
                ctx.document().sketch = std::move(r.solved);
            }
            return ToolResult{Json{{"converged", r.converged},
                                   {"residual_norm", num(r.residual_norm)},
                                   {"iterations", r.iterations},
                                   {"max_displacement", num(r.max_displacement)}},
                              {}};
        });

    reg.register_tool(
        {"sketch_recognizer",
         {},
         "{primitives, constraints}",
         "Describes the working sketch: every primitive with its id, type and parameters, and every\n"
         "constraint as kind(ref, ref). Also returns a rendering where each primitive carries a\n"
         "numeric marker with its id.\n"
         "Example: $s = sketch_recognizer()"},
        [](ToolContext& ctx, const Args&) {
            const SketchGraph& sketch = ctx.document().sketch;
            ToolResult out{sketch_summary(sketch), {}};
            if (!sketch.empty()) {
                const SketchRender render = render_sketch(sketch, kDefaultImageSize, kDefaultImageSize, true);
                out.artifacts.push_back(ctx.image("sketch", display_image(render)));
            }
            return out;
        });

    reg.register_tool(
        {"solid_recognizer",
         {},
         "{steps, bounds}",
         "Describes the solid: each sketch-extrude step with its operation, extrusion parameters and\n"
         "number of profile loops, plus the world bounding box. Also returns front, right, top and\n"
         "isometric wireframe views.\n"
         "Example: $v = solid_recognizer()"},
        [](ToolContext& ctx, const Args&) {
            const SolidModel& model = ctx.document().solid;
            if (model.empty()) {
                throw Error(ErrorCode::EmptyModel, "the solid has no steps yet");
            }
            Json steps = Json::array();
            Vec3 lo{1e300, 1e300, 1e300};
            Vec3 hi{-1e300, -1e300, -1e300};
            for (std::size_t i = 0; i < model.size(); ++i) {
                const SolidStep& s = model.steps()[i];
                Json ext = extrusion_to_json(s.op);
                for (auto& [k, v] : ext.items()) {
                    if (v.is_number()) {
                        v = num(v.get<double>());
                    } else if (v.is_array()) {
                        for (auto& x : v) {
                            x = num(x.get<double>());
                        }
                    }
                }
                steps.push_back(Json{{"index", i},
                                     {"operation", extrude_type_name(s.op.beta)},
                                     {"loops", s.profile.loops.size()},
                                     {"extrusion", std::move(ext)}});
                if (s.op.beta == ExtrudeType::Cut) {
                    continue;
                }
                for (const Vec3& c : step_box_corners(s)) {
                    lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
                    hi = {std::max(hi.x, c.x), std::max(hi.y, c.y), std::max(hi.z, c.z)};
                }
            }
            ToolResult out{Json{{"steps", std::move(steps)}, {"bounds", {vec_json(lo), vec_json(hi)}}}, {}};
            const auto views = render_solid_views(model);
            for (std::size_t v = 0; v < views.size(); ++v) {
                out.artifacts.push_back(ctx.image(std::string(solid_view_name(kSolidViews[v])), to_gray(views[v])));
            }
            return out;
        });

    reg.register_tool(
        {"constraint_checker", kRefParams, "{valid, causes_movement, degenerate, ...}",
         "Tests a constraint without adding it. valid: the solver can satisfy it together with the\n"
         "existing constraints without collapsing geometry. causes_movement: satisfying it would\n"
         "move geometry noticeably, so it probably does not match the design intent. Arguments as\n"
         "for addConstraint.\n"
         "Example: $c = constraint_checker(kind=\"parallel\", first=0, second=2)"},
        [](ToolContext& ctx, const Args& args) {
            const Constraint c = constraint_arg(args);
            return ToolResult{report_json(check_constraint(ctx.document().sketch, c)), {}};
        });

    reg.register_tool(
        {"extrude",
         {{"operation", "string", false},
          {"d_plus", "number", false},
          {"d_minus", "number", false},
          {"theta", "number", false},
          {"phi", "number", false},
          {"gamma", "number", false},
          {"origin", "[x, y, z]", false},
          {"scale", "number", false}},
         "int",
         "Extrudes the closed loops of the working sketch and combines the prism with the solid.\n"
         "Returns the step index and starts a new empty working sketch.\n"
         "  operation: new (default), join, cut or intersect; the first step must be new\n"
         "  d_plus, d_minus: extent along and against the sketch normal (defaults 1 and 0)\n"
         "  theta, phi, gamma: sketch plane orientation, rotation Rz(phi) Ry(theta) Rz(gamma)\n"
         "  origin: sketch plane origin; scale: sketch scale factor\n"
         "Example: extrude(operation=\"cut\", d_plus=2, origin=[0, 0, 1])"},
        [](ToolContext& ctx, const Args& args) {
            ExtrusionOp op;
            const std::string type = args.string("operation", "new");
            const auto beta = parse_extrude_type(type);
            if (!beta) {
                bad("operation", "must be new, join, cut or intersect");
            }
            op.beta = *beta;
            op.d_plus = args.number("d_plus", 1.0);
            op.d_minus = args.number("d_minus", 0.0);
            op.theta = args.number("theta", 0.0);
            op.phi = args.number("phi", 0.0);
            op.gamma = args.number("gamma", 0.0);
            op.tau = args.vec3("origin", Vec3{});
            op.sigma = args.number("scale", 1.0);
            Document& doc = ctx.document();
            doc.solid = extrude(doc.solid, doc.sketch, op);
            doc.sketch = SketchGraph{};
            return ToolResult{Json(doc.solid.size() - 1), {}};
        });

    reg.register_tool(
        {"cross_section",
         {{"normal", "[x, y, z]", true}, {"origin", "[x, y, z]", false}, {"source", "string", false}},
         "{source, area, perimeter, loops, holes, open_chains}",
         "Cuts the solid or the attached 3D mesh with a plane and returns the section measurements\n"
         "with an image of the section outline.\n"
         "  source: solid, mesh or auto (default: the solid when it has steps, else the mesh)\n"
         "Example: $x = cross_section(origin=[0, 0, 0.5], normal=[0, 0, 1])"},
        [](ToolContext& ctx, const Args& args) {
            const SectionPlane plane = SectionPlane::make(args.vec3("origin", Vec3{}), args.vec3("normal"));
            std::string source = args.string("source", "auto");
            if (source == "auto") {
                source = !ctx.document().solid.empty() || !ctx.state.mesh ? "solid" : "mesh";
            }
            SectionPolygon poly;
            int open_chains = 0;
            if (source == "solid") {
                poly = cross_section_solid(ctx.document().solid, plane);
            } else if (source == "mesh") {
                if (!ctx.state.mesh) {
                    throw Error(ErrorCode::BadArgument, "the request has no mesh attachment");
                }
                MeshSection s = cross_section_mesh(*ctx.state.mesh, plane);
                poly = std::move(s.polygon);
                open_chains = s.open_chains;
            } else {
                bad("source", "must be solid, mesh or auto");
            }
            int holes = 0;
            for (const auto& loop : poly.loops) {
                holes += signed_area(loop) < 0.0 ? 1 : 0;
            }
            ToolResult out{Json{{"source", source},
                                {"area", num(poly.area())},
                                {"perimeter", num(poly.perimeter())},
                                {"loops", poly.loops.size()},
                                {"holes", holes},
                                {"open_chains", open_chains}},
                           {}};
            if (!poly.empty()) {
                out.artifacts.push_back(ctx.image("section", to_gray(section_image(poly))));
            }
            return out;
        });

    // Stub for the neural parameterizer: reads the parameterization stored
    // next to the image as <stem>.sketch.json.
    reg.register_tool(
        {"handdrawn_parameterize",
         {{"image", "string", false}},
         "{image, primitives, constraints}",
         "Converts an attached hand-drawn sketch image into precise primitives and constraints. The\n"
         "result is not added to the working sketch; recreate it with addGeometry and addConstraint.\n"
         "  image: file name of the attachment (default: the first image)\n"
         "Example: $h = handdrawn_parameterize()"},
        [](ToolContext& ctx, const Args& args) {
            const std::filesystem::path& image = pick_image(ctx, args);
            std::filesystem::path sidecar = image;
            sidecar.replace_extension(".sketch.json");
            if (!std::filesystem::exists(sidecar)) {
                throw Error(ErrorCode::Io, "no parameterization available for " + image.filename().string());
            }
            Json out{{"image", image.filename().string()}};
            const Json summary = sketch_summary(load_sketch(sidecar));
            for (const auto& [k, v] : summary.items()) {
                out[k] = v;
            }
            return ToolResult{std::move(out), {}};
        });

    return reg;
}

} // namespace cadkit::agent
