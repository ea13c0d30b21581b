#include <doctest.h>

#include "cadkit/serialization.hpp"
#include "generators.hpp"

#include <cmath>

using namespace cadkit;
using cadkit::testing::Rng;

namespace {

SketchGraph sample_sketch() {
    SketchGraph s;
    const auto a = s.add_primitive(Line{{0, 0}, {2, 0}});
    const auto b = s.add_primitive(Arc{{2, 1}, 1, 1.5 * kPi, 0.5 * kPi, false});
    const auto c = s.add_primitive(Circle{{1, 0.5}, 0.25});
    const auto p = s.add_primitive(Point{{-1.125, 3}});
    s.add_constraint(Constraint::unary(ConstraintKind::Horizontal, a));
    s.add_constraint({ConstraintKind::Coincident, {a, SubRef::End}, {b, SubRef::Start}});
    s.add_constraint({ConstraintKind::Tangent, {a, SubRef::Entire}, {b, SubRef::Entire}});
    s.add_constraint({ConstraintKind::Coincident, {p, SubRef::Entire}, {c, SubRef::Mid}});
    return s;
}

double point_based_error(const SketchGraph& a, const SketchGraph& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a.primitives()[i].id == b.primitives()[i].id);
        const auto ra = param_record(a.primitives()[i].primitive, Strategy::PointBased);
        const auto rb = param_record(b.primitives()[i].primitive, Strategy::PointBased);
        REQUIRE(ra.type == rb.type);
        for (std::size_t k = 0; k < ra.fields.size(); ++k) {
            worst = std::max(worst, std::abs(ra.fields[k].value - rb.fields[k].value));
        }
    }
    return worst;
}

ErrorCode parse_error(std::string_view text) {
    try {
        parse_json(text);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Io;
}

} // namespace

TEST_SUITE("serialization") {

TEST_CASE("number formatting") {
    CHECK(format_number(1.5, 6) == "1.5");
    CHECK(format_number(2.0, 6) == "2");
    CHECK(format_number(-0.0, 6) == "0");
    CHECK(format_number(-1e-9, 6) == "0");
    CHECK(format_number(0.1234567, 6) == "0.123457");
    CHECK(format_number(0.1, -1) == "0.1");
    CHECK(format_number(1.0 / 3.0, -1) == "0.3333333333333333");
}

TEST_CASE("single circle round trip") {
    SketchGraph s;
    s.add_primitive(Circle{{0, 0}, 1});
    const std::string text = serialize(s);
    CHECK(parse_json(text) == s);
    CHECK(serialize(s) == text);
}

TEST_CASE("json layout") {
    const auto doc = to_json(sample_sketch());
    CHECK(doc["version"] == 1);
    CHECK(doc["primitives"].size() == 4);
    CHECK(doc["primitives"][0]["type"] == "line");
    CHECK(doc["primitives"][0]["params"]["x_e"] == 2.0);
    CHECK(doc["constraints"][1]["kind"] == "coincident");
    CHECK(doc["constraints"][1]["refs"][0]["subref"] == "end");
}

TEST_CASE("point-based json round trip on random sketches") {
    Rng rng(44);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
        SketchGraph s = cadkit::testing::random_sketch(rng, cadkit::testing::uniform_int(rng, 0, 8));
        cadkit::testing::detect_constraints(s, 1e-9);
        const SketchGraph back = parse_json(serialize(s));
        worst = std::max(worst, point_based_error(s, back));
        CHECK(back.constraints() == s.constraints());
        CHECK(back.next_id() == s.next_id());
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("every strategy parses back") {
    Rng rng(45);
    for (int i = 0; i < 100; ++i) {
        const SketchGraph s = cadkit::testing::random_sketch(rng, 6);
        for (auto strategy : {Strategy::Implicit, Strategy::PointBased, Strategy::Overparameterized}) {
            const SketchGraph back = parse_json(serialize(s, {Format::Json, strategy, 9}));
            CHECK(point_based_error(s, back) < 1e-6);
        }
        CHECK(parse_json(to_document(s)) == s);
    }
}

TEST_CASE("overparameterized values project onto point-based values") {
    Rng rng(46);
    for (int i = 0; i < 50; ++i) {
        const SketchGraph s = cadkit::testing::random_sketch(rng, 5);
        const auto over = to_json(s, {Format::Json, Strategy::Overparameterized, 6});
        const auto pb = to_json(s, {Format::Json, Strategy::PointBased, 6});
        for (std::size_t k = 0; k < s.size(); ++k) {
            for (const auto& [key, value] : pb["primitives"][k]["params"].items()) {
                CHECK(over["primitives"][k]["params"][key] == value);
            }
        }
    }
}

TEST_CASE("implicit strategy rejects zero-length lines") {
    SketchGraph s;
    s.add_primitive(Line{{1, 1}, {1, 1}});
    CHECK_THROWS_AS(serialize(s, {Format::Json, Strategy::Implicit, 6}), Error);
    CHECK(parse_json(to_document(s)) == s);
}

TEST_CASE("parse errors") {
    CHECK(parse_error("{not json") == ErrorCode::SyntaxError);
    CHECK(parse_error(R"({"primitives": []})") == ErrorCode::SchemaError);
    CHECK(parse_error(R"({"primitives": [{"id": 0, "type": "spline", "params": {}}], "constraints": []})") ==
          ErrorCode::SchemaError);
    CHECK(parse_error(R"({"primitives": [{"id": 0, "type": "point", "params": {"x_p": 1}}], "constraints": []})") ==
          ErrorCode::SchemaError);
    CHECK(parse_error(R"({"primitives": [{"id": 0, "type": "point", "params": {"x_p": 1, "y_p": 2}}],
                          "constraints": [{"kind": "coincident", "refs": [{"id": 0, "subref": "entire"},
                                                                          {"id": 99, "subref": "start"}]}]})") ==
          ErrorCode::InvariantViolation);
    CHECK(parse_error(R"({"primitives": [{"id": 0, "type": "circle", "params": {"x_c": 1, "y_c": 2, "r": -1}}],
                          "constraints": []})") == ErrorCode::InvariantViolation);
    CHECK(parse_json(R"({"primitives": [], "constraints": []})").empty());
}

TEST_CASE("tabular formats") {
    const SketchGraph s = sample_sketch();
    const std::string csv = serialize(s, {Format::Csv, Strategy::PointBased, 6});
    CHECK(csv.rfind("id,type,", 0) == 0);
    CHECK(csv.find('\r') == std::string::npos);
    const std::string html = serialize(s, {Format::Html, Strategy::Implicit, 6});
    CHECK(html.find("<table class=\"primitives\">") != std::string::npos);
    CHECK(html.find("<table class=\"constraints\">") != std::string::npos);

    const std::string md = serialize(s, {Format::Markdown, Strategy::PointBased, 6});
    CHECK(md == read_text_file(CADKIT_SOURCE_DIR "/tests/golden/sample.point_based.md"));
    CHECK(serialize(s, {Format::Markdown, Strategy::Overparameterized, 6}) ==
          read_text_file(CADKIT_SOURCE_DIR "/tests/golden/sample.overparameterized.md"));
    CHECK(serialize(s, {Format::Csv, Strategy::Implicit, 6}) ==
          read_text_file(CADKIT_SOURCE_DIR "/tests/golden/sample.implicit.csv"));
}

}
