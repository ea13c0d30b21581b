#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cadkit/agent.hpp"
#include "cadkit/metrics.hpp"
#include "cadkit/render.hpp"
#include "cadkit/section.hpp"
#include "cadkit/serialization.hpp"
#include "cadkit/solid.hpp"
#include "cadkit/solver.hpp"

namespace py = pybind11;
using namespace cadkit;

namespace {

using Pair = std::array<double, 2>;
using Triple = std::array<double, 3>;

Vec2 v2(const Pair& p) { return {p[0], p[1]}; }
Vec3 v3(const Triple& p) { return {p[0], p[1], p[2]}; }

py::array_t<std::uint8_t> to_array(const std::vector<std::uint8_t>& pixels, int width, int height) {
    py::array_t<std::uint8_t> out({height, width});
    std::copy(pixels.begin(), pixels.end(), out.mutable_data());
    return out;
}

RasterImage to_mask(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) {
        throw Error(ErrorCode::SizeMismatch, "expected a 2-D image");
    }
    RasterImage m;
    m.height = static_cast<int>(a.shape(0));
    m.width = static_cast<int>(a.shape(1));
    m.pixels.resize(static_cast<std::size_t>(a.size()));
    const std::uint8_t* src = a.data();
    for (std::size_t i = 0; i < m.pixels.size(); ++i) {
        m.pixels[i] = src[i] != 0 ? 1 : 0;
    }
    return m;
}

py::dict report_dict(const ConstraintReport& r) {
    py::dict d;
    d["valid"] = r.valid;
    d["causes_movement"] = r.causes_movement;
    d["degenerate"] = r.degenerate;
    d["residual_before"] = r.residual_before;
    d["residual_after"] = r.residual_after;
    d["max_displacement"] = r.max_displacement;
    d["converged"] = r.converged;
    return d;
}

PrimitiveId add(SketchGraph& s, const Primitive& p) { return s.add_primitive(p); }

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "cadkit native core";

    static py::exception<Error> error(m, "CadkitError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            py::object args = py::make_tuple(std::string(error_code_name(e.code())), std::string(e.what()));
            PyErr_SetObject(error.ptr(), args.ptr());
        }
    });

    py::class_<SolveResult>(m, "SolveResult")
        .def_readonly("solved", &SolveResult::solved)
        .def_readonly("converged", &SolveResult::converged)
        .def_readonly("residual_norm", &SolveResult::residual_norm)
        .def_readonly("iterations", &SolveResult::iterations)
        .def_readonly("max_displacement", &SolveResult::max_displacement)
        .def("__repr__", [](const SolveResult& r) {
            return "SolveResult(converged=" + std::string(r.converged ? "True" : "False") +
                   ", iterations=" + std::to_string(r.iterations) + ")";
        });

    py::class_<SketchGraph>(m, "Sketch")
        .def(py::init<>())
        .def_static("from_json", [](const std::string& text) { return parse_json(text); })
        .def_static("load", &load_sketch)
        .def("to_json", &to_document)
        .def("save", [](const SketchGraph& s, const std::filesystem::path& p) { save_sketch(p, s); })
        .def("add_line",
             [](SketchGraph& s, Pair a, Pair b) { return add(s, Line{v2(a), v2(b)}).index; },
             py::arg("start"), py::arg("end"))
        .def("add_circle",
             [](SketchGraph& s, Pair c, double r) { return add(s, Circle{v2(c), r}).index; },
             py::arg("center"), py::arg("radius"))
        .def("add_arc",
             [](SketchGraph& s, Pair c, double r, double t0, double t1, bool cw) {
                 return add(s, Arc{v2(c), r, t0, t1, cw}).index;
             },
             py::arg("center"), py::arg("radius"), py::arg("theta_start"), py::arg("theta_end"),
             py::arg("clockwise") = false)
        .def("add_point", [](SketchGraph& s, Pair p) { return add(s, Point{v2(p)}).index; }, py::arg("position"))
        .def("add_constraint",
             [](SketchGraph& s, const std::string& spec) { s.add_constraint(parse_constraint_spec(spec)); },
             py::arg("spec"))
        .def("delete",
             [](SketchGraph& s, const std::vector<std::uint32_t>& ids) {
                 std::vector<PrimitiveId> pids;
                 for (const auto i : ids) {
                     pids.push_back(PrimitiveId{i});
                 }
                 return s.del_geometries(pids);
             })
        .def_property_readonly("ids",
                               [](const SketchGraph& s) {
                                   std::vector<std::uint32_t> ids;
                                   for (const auto& e : s.primitives()) {
                                       ids.push_back(e.id.index);
                                   }
                                   return ids;
                               })
        .def_property_readonly("constraints",
                               [](const SketchGraph& s) {
                                   std::vector<std::string> out;
                                   for (const auto& c : s.constraints()) {
                                       out.push_back(constraint_spec(c));
                                   }
                                   return out;
                               })
        .def("type_of", [](const SketchGraph& s, std::uint32_t id) {
            return std::string(type_name(type_of(s.at(PrimitiveId{id}))));
        })
        .def("solve",
             [](const SketchGraph& s, double tol, int iters) {
                 SolveOptions o;
                 o.residual_tolerance = tol;
                 o.max_iterations = iters;
                 return solve(s, o);
             },
             py::arg("residual_tolerance") = 1e-8, py::arg("max_iterations") = 200)
        .def("check",
             [](const SketchGraph& s, const std::string& spec) {
                 return report_dict(check_constraint(s, parse_constraint_spec(spec)));
             },
             py::arg("spec"))
        .def("serialize",
             [](const SketchGraph& s, const std::string& format, const std::string& strategy, int precision) {
                 SerializationConfig cfg;
                 const auto f = parse_format_name(format);
                 const auto st = parse_strategy_name(strategy);
                 if (!f || !st) {
                     throw Error(ErrorCode::SchemaError, "unknown format or strategy");
                 }
                 cfg.format = *f;
                 cfg.strategy = *st;
                 cfg.float_precision = precision;
                 return serialize(s, cfg);
             },
             py::arg("format") = "json", py::arg("strategy") = "point_based", py::arg("precision") = 6)
        .def("render",
             [](const SketchGraph& s, int size, bool marks) {
                 const SketchRender r = render_sketch(s, size, size, marks);
                 if (marks) {
                     const GrayImage g = display_image(r);
                     return to_array(g.pixels, g.width, g.height);
                 }
                 return to_array(r.mask.pixels, r.mask.width, r.mask.height);
             },
             py::arg("size") = kDefaultImageSize, py::arg("marks") = false,
             "1-pixel 0/1 mask, or a gray display image with id markers when marks=True")
        .def("svg", [](const SketchGraph& s, bool marks, int size) { return render_sketch_svg(s, marks, size, size); },
             py::arg("marks") = true, py::arg("size") = kDefaultImageSize)
        .def("__len__", &SketchGraph::size)
        .def("__eq__", [](const SketchGraph& a, const SketchGraph& b) { return a == b; })
        .def("__repr__", [](const SketchGraph& s) {
            return "Sketch(primitives=" + std::to_string(s.size()) + ", constraints=" +
                   std::to_string(s.constraints().size()) + ")";
        });

    py::class_<SolidModel>(m, "Solid")
        .def(py::init<>())
        .def_static("from_json",
                    [](const std::string& text) { return solid_from_json(nlohmann::ordered_json::parse(text)); })
        .def_static("load", &load_solid)
        .def("to_json", [](const SolidModel& s) { return solid_to_json(s).dump(2) + "\n"; })
        .def("extrude",
             [](const SolidModel& s, const SketchGraph& sketch, double d_plus, double d_minus,
                const std::string& operation, double theta, double phi, double gamma, Triple origin, double scale) {
                 ExtrusionOp op;
                 op.d_plus = d_plus;
                 op.d_minus = d_minus;
                 const auto t = parse_extrude_type(operation);
                 if (!t) {
                     throw Error(ErrorCode::InvalidExtrusion, "unknown operation '" + operation + "'");
                 }
                 op.beta = *t;
                 op.theta = theta;
                 op.phi = phi;
                 op.gamma = gamma;
                 op.tau = v3(origin);
                 op.sigma = scale;
                 return extrude(s, sketch, op);
             },
             py::arg("sketch"), py::arg("d_plus") = 1.0, py::arg("d_minus") = 0.0, py::arg("operation") = "new",
             py::arg("theta") = 0.0, py::arg("phi") = 0.0, py::arg("gamma") = 0.0,
             py::arg("origin") = Triple{0, 0, 0}, py::arg("scale") = 1.0,
             "New solid with one more sketch-extrude step")
        .def("occupancy",
             [](const SolidModel& s, const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) {
                 if (pts.ndim() != 2 || pts.shape(1) != 3) {
                     throw Error(ErrorCode::SizeMismatch, "points must be an (N, 3) array");
                 }
                 const auto n = pts.shape(0);
                 py::array_t<bool> out(n);
                 auto r = pts.unchecked<2>();
                 auto w = out.mutable_unchecked<1>();
                 for (py::ssize_t i = 0; i < n; ++i) {
                     w(i) = occupancy(s, Vec3{r(i, 0), r(i, 1), r(i, 2)});
                 }
                 return out;
             })
        .def("section",
             [](const SolidModel& s, Triple origin, Triple normal) {
                 const SectionPlane plane = SectionPlane::make(v3(origin), v3(normal));
                 const SectionPolygon poly = cross_section_solid(s, plane);
                 py::dict d;
                 d["area"] = poly.area();
                 d["perimeter"] = poly.perimeter();
                 std::vector<std::vector<Pair>> loops;
                 for (const auto& loop : poly.loops) {
                     auto& out = loops.emplace_back();
                     for (const auto& p : loop) {
                         out.push_back(Pair{p.x, p.y});
                     }
                 }
                 d["loops"] = loops;
                 return d;
             },
             py::arg("origin"), py::arg("normal"))
        .def("views",
             [](const SolidModel& s, int size) {
                 py::dict d;
                 const auto views = render_solid_views(s, size, size);
                 const SolidView order[] = {SolidView::Front, SolidView::Right, SolidView::Top, SolidView::Isometric};
                 for (std::size_t i = 0; i < views.size(); ++i) {
                     d[py::str(std::string(solid_view_name(order[i])))] =
                         to_array(views[i].pixels, views[i].width, views[i].height);
                 }
                 return d;
             },
             py::arg("size") = 512)
        .def("__len__", &SolidModel::size)
        .def("__repr__", [](const SolidModel& s) { return "Solid(steps=" + std::to_string(s.size()) + ")"; });

    m.def("chamfer", [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
                        const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& b) {
        return chamfer(to_mask(a), to_mask(b));
    });
    m.def("pf1", &pf1, py::arg("gt"), py::arg("pred"));
    m.def("cf1", &cf1, py::arg("gt"), py::arg("pred"));
    m.def("accuracy", &accuracy, py::arg("gt"), py::arg("pred"));

    m.def(
        "run_scripted",
        [](const std::filesystem::path& fixture, std::optional<std::string> query, int budget) {
            agent::ScriptedPlanner planner = agent::ScriptedPlanner::from_file(fixture);
            agent::Query q = agent::ScriptedPlanner::query_from_file(fixture);
            if (query) {
                q.text = *query;
            }
            const agent::ToolRegistry tools = agent::standard_registry();
            agent::SessionState state;
            {
                py::gil_scoped_release release;
                state = agent::run_session(std::move(q), planner, tools, budget);
            }
            return py::make_tuple(std::string(agent::status_name(state.status)),
                                  agent::transcript_jsonl(state.transcript), state.document.sketch,
                                  state.document.solid);
        },
        py::arg("fixture"), py::arg("query") = py::none(), py::arg("budget") = agent::kDefaultStepBudget,
        "(status, transcript JSONL, sketch, solid)");
}
