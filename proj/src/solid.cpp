#include "cadkit/solid.hpp"

#include "cadkit/render.hpp"
#include "cadkit/serialization.hpp"

#include <algorithm>
#include <cmath>

namespace cadkit {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 rotation(const ExtrusionOp& op) {
    auto rz = [](double a) -> Mat3 {
        const double c = std::cos(a);
        const double s = std::sin(a);
        return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
    };
    auto ry = [](double a) -> Mat3 {
        const double c = std::cos(a);
        const double s = std::sin(a);
        return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
    };
    auto mul = [](const Mat3& a, const Mat3& b) {
        Mat3 m{};
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                for (int k = 0; k < 3; ++k) {
                    m[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        return m;
    };
    return mul(mul(rz(op.phi), ry(op.theta)), rz(op.gamma));
}

Vec3 column(const Mat3& m, int j) {
    return {m[0][j], m[1][j], m[2][j]};
}

bool finite(double v) {
    return std::isfinite(v);
}

} // namespace

std::string_view extrude_type_name(ExtrudeType t) {
    switch (t) {
    case ExtrudeType::New: return "new";
    case ExtrudeType::Cut: return "cut";
    case ExtrudeType::Join: return "join";
    case ExtrudeType::Intersect: return "intersect";
    }
    return "new";
}

std::optional<ExtrudeType> parse_extrude_type(std::string_view name) {
    for (auto t : {ExtrudeType::New, ExtrudeType::Cut, ExtrudeType::Join, ExtrudeType::Intersect}) {
        if (extrude_type_name(t) == name) {
            return t;
        }
    }
    return std::nullopt;
}

PlaneFrame sketch_frame(const ExtrusionOp& op) {
    const Mat3 r = rotation(op);
    return {op.tau, column(r, 0), column(r, 1), column(r, 2)};
}

Vec3 sketch_to_world(const ExtrusionOp& op, Vec2 uv, double h) {
    const PlaneFrame f = sketch_frame(op);
    return f.origin + (op.sigma * uv.x) * f.ex + (op.sigma * uv.y) * f.ey + h * f.ez;
}

Vec3 world_to_sketch(const ExtrusionOp& op, Vec3 p) {
    const PlaneFrame f = sketch_frame(op);
    const Vec3 q = p - f.origin;
    return {dot(q, f.ex) / op.sigma, dot(q, f.ey) / op.sigma, dot(q, f.ez)};
}

ExtrusionOp validated(const ExtrusionOp& op) {
    const bool all_finite = finite(op.theta) && finite(op.phi) && finite(op.gamma) && finite(op.tau.x) &&
                            finite(op.tau.y) && finite(op.tau.z) && finite(op.sigma) && finite(op.d_minus) &&
                            finite(op.d_plus);
    if (!all_finite) {
        throw Error(ErrorCode::InvalidExtrusion, "extrusion parameters must be finite");
    }
    if (!(op.sigma > 0.0)) {
        throw Error(ErrorCode::InvalidExtrusion, "sketch scale must be positive");
    }
    if (op.d_minus < 0.0 || op.d_plus < 0.0 || !(op.d_minus + op.d_plus > 0.0)) {
        throw Error(ErrorCode::InvalidExtrusion, "extrusion distances must be non-negative with a positive sum");
    }
    if (op.theta < 0.0 || op.theta > kPi) {
        throw Error(ErrorCode::InvalidExtrusion, "theta must lie in [0, pi]");
    }
    ExtrusionOp out = op;
    out.phi = normalize_angle(op.phi);
    out.gamma = normalize_angle(op.gamma);
    return out;
}

SolidModel extrude(const SolidModel& model, const SketchGraph& sketch, const ExtrusionOp& op) {
    const ExtrusionOp checked = validated(op);
    if (model.empty() && checked.beta != ExtrudeType::New) {
        throw Error(ErrorCode::InvalidExtrusion, "the first extrusion must be of type new");
    }
    SolidModel out = model;
    out.steps_.push_back({sketch, checked, extract_profile(sketch)});
    return out;
}

bool step_occupancy(const SolidStep& step, Vec3 p) {
    const Vec3 l = world_to_sketch(step.op, p);
    return l.z >= -step.op.d_minus && l.z <= step.op.d_plus && step.profile.contains({l.x, l.y});
}

bool occupancy(const SolidModel& model, Vec3 p) {
    bool inside = false;
    for (const auto& step : model.steps()) {
        const bool here = step_occupancy(step, p);
        switch (step.op.beta) {
        case ExtrudeType::New:
        case ExtrudeType::Join: inside = inside || here; break;
        case ExtrudeType::Cut: inside = inside && !here; break;
        case ExtrudeType::Intersect: inside = inside && here; break;
        }
    }
    return inside;
}

std::array<Vec3, 8> step_box_corners(const SolidStep& step) {
    const Box2 b = step.profile.bounds();
    std::array<Vec3, 8> out;
    int k = 0;
    for (double h : {-step.op.d_minus, step.op.d_plus}) {
        for (double y : {b.min.y, b.max.y}) {
            for (double x : {b.min.x, b.max.x}) {
                out[static_cast<std::size_t>(k++)] = sketch_to_world(step.op, {x, y}, h);
            }
        }
    }
    return out;
}

std::vector<std::vector<Vec3>> wireframe_edges(const SolidModel& model) {
    std::vector<std::vector<Vec3>> out;
    for (const auto& step : model.steps()) {
        const double lo = -step.op.d_minus;
        const double hi = step.op.d_plus;
        for (const auto& loop : step.profile.loops) {
            const std::vector<Vec2> ring = loop.polygon(180);
            for (double h : {lo, hi}) {
                std::vector<Vec3> line;
                line.reserve(ring.size() + 1);
                for (const Vec2& q : ring) {
                    line.push_back(sketch_to_world(step.op, q, h));
                }
                line.push_back(line.front());
                out.push_back(std::move(line));
            }
            for (const Vec2& v : loop.vertices()) {
                out.push_back({sketch_to_world(step.op, v, lo), sketch_to_world(step.op, v, hi)});
            }
        }
    }
    return out;
}

std::string_view solid_view_name(SolidView v) {
    switch (v) {
    case SolidView::Front: return "front";
    case SolidView::Right: return "right";
    case SolidView::Top: return "top";
    case SolidView::Isometric: return "isometric";
    }
    return "front";
}

std::array<RasterImage, 4> render_solid_views(const SolidModel& model, int width, int height) {
    if (model.empty()) {
        throw Error(ErrorCode::EmptyModel, "solid model has no extrusion");
    }
    const double s2 = std::sqrt(2.0);
    const double s6 = std::sqrt(6.0);
    // Screen right / up vectors per camera.
    const std::array<std::pair<Vec3, Vec3>, 4> cameras{{
        {{1, 0, 0}, {0, 0, 1}},
        {{0, 1, 0}, {0, 0, 1}},
        {{1, 0, 0}, {0, 1, 0}},
        {{-1 / s2, 1 / s2, 0}, {-1 / s6, -1 / s6, 2 / s6}},
    }};
    const auto edges = wireframe_edges(model);
    std::array<RasterImage, 4> out;
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const auto [right, up] = cameras[v];
        auto project = [&](Vec3 p) { return Vec2{dot(p, right), dot(p, up)}; };
        Box2 box;
        for (const auto& line : edges) {
            for (const Vec3& p : line) {
                box.expand(project(p));
            }
        }
        const PixelFrame frame{Normalization::fit(box), width, height};
        RasterImage img(width, height);
        for (const auto& line : edges) {
            for (std::size_t k = 0; k + 1 < line.size(); ++k) {
                const auto [x0, y0] = frame.to_pixel(project(line[k]));
                const auto [x1, y1] = frame.to_pixel(project(line[k + 1]));
                draw_segment(img, x0, y0, x1, y1);
            }
        }
        out[v] = std::move(img);
    }
    return out;
}

nlohmann::ordered_json extrusion_to_json(const ExtrusionOp& op) {
    nlohmann::ordered_json j;
    j["theta"] = op.theta;
    j["phi"] = op.phi;
    j["gamma"] = op.gamma;
    j["tau"] = {op.tau.x, op.tau.y, op.tau.z};
    j["sigma"] = op.sigma;
    j["d_minus"] = op.d_minus;
    j["d_plus"] = op.d_plus;
    j["beta"] = extrude_type_name(op.beta);
    return j;
}

ExtrusionOp extrusion_from_json(const nlohmann::ordered_json& j) {
    if (!j.is_object()) {
        throw Error(ErrorCode::SchemaError, "extrusion must be an object");
    }
    ExtrusionOp op;
    auto number = [&](const char* key, double fallback) {
        if (!j.contains(key)) {
            return fallback;
        }
        if (!j[key].is_number()) {
            throw Error(ErrorCode::SchemaError, std::string("extrusion field '") + key + "' must be a number");
        }
        return j[key].get<double>();
    };
    op.theta = number("theta", 0.0);
    op.phi = number("phi", 0.0);
    op.gamma = number("gamma", 0.0);
    if (j.contains("tau")) {
        const auto& t = j["tau"];
        if (!t.is_array() || t.size() != 3 || !t[0].is_number() || !t[1].is_number() || !t[2].is_number()) {
            throw Error(ErrorCode::SchemaError, "extrusion field 'tau' must be three numbers");
        }
        op.tau = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
    }
    op.sigma = number("sigma", 1.0);
    op.d_minus = number("d_minus", 0.0);
    op.d_plus = number("d_plus", 1.0);
    if (j.contains("beta")) {
        const auto beta = j["beta"].is_string() ? parse_extrude_type(j["beta"].get<std::string>()) : std::nullopt;
        if (!beta) {
            throw Error(ErrorCode::SchemaError, "extrusion field 'beta' must be new, cut, join or intersect");
        }
        op.beta = *beta;
    }
    return op;
}

nlohmann::ordered_json solid_to_json(const SolidModel& model) {
    nlohmann::ordered_json doc;
    doc["version"] = 1;
    doc["kind"] = "solid";
    doc["steps"] = nlohmann::ordered_json::array();
    const SerializationConfig cfg{Format::Json, Strategy::Overparameterized, -1};
    for (const auto& step : model.steps()) {
        doc["steps"].push_back({{"sketch", to_json(step.sketch, cfg)}, {"extrusion", extrusion_to_json(step.op)}});
    }
    return doc;
}

SolidModel solid_from_json(const nlohmann::ordered_json& doc) {
    if (!doc.is_object() || !doc.contains("steps") || !doc["steps"].is_array()) {
        throw Error(ErrorCode::SchemaError, "solid document needs a 'steps' array");
    }
    if (doc.contains("kind") && doc["kind"] != "solid") {
        throw Error(ErrorCode::SchemaError, "document kind is not 'solid'");
    }
    SolidModel model;
    for (const auto& step : doc["steps"]) {
        if (!step.is_object() || !step.contains("sketch") || !step.contains("extrusion")) {
            throw Error(ErrorCode::SchemaError, "each step needs 'sketch' and 'extrusion'");
        }
        model = extrude(model, from_json(step["sketch"]), extrusion_from_json(step["extrusion"]));
    }
    return model;
}

SolidModel load_solid(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::SyntaxError, e.what());
    }
    return solid_from_json(doc);
}

void save_solid(const std::filesystem::path& path, const SolidModel& model) {
    write_text_file(path, solid_to_json(model).dump(2) + "\n");
}

} // namespace cadkit
