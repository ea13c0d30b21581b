#include "cadkit/serialization.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cadkit {

using ojson = nlohmann::ordered_json;

std::string_view format_name(Format f) {
    switch (f) {
    case Format::Json: return "json";
    case Format::Csv: return "csv";
    case Format::Markdown: return "markdown";
    case Format::Html: return "html";
    }
    return "?";
}

std::optional<Format> parse_format_name(std::string_view name) {
    for (auto f : {Format::Json, Format::Csv, Format::Markdown, Format::Html}) {
        if (format_name(f) == name) {
            return f;
        }
    }
    if (name == "md") {
        return Format::Markdown;
    }
    return std::nullopt;
}

std::string format_number(double v, int precision) {
    char buf[512];
    std::to_chars_result res{};
    if (precision < 0) {
        res = std::to_chars(buf, buf + sizeof(buf), v);
    } else {
        res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
    }
    std::string s(buf, res.ptr);
    if (precision >= 0 && s.find('.') != std::string::npos) {
        while (!s.empty() && s.back() == '0') {
            s.pop_back();
        }
        if (!s.empty() && s.back() == '.') {
            s.pop_back();
        }
    }
    if (s == "-0") {
        s = "0";
    }
    return s;
}

namespace {

double rounded(double v, int precision) {
    if (precision < 0) {
        return v == 0.0 ? 0.0 : v;
    }
    const std::string s = format_number(v, precision);
    double out = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), out);
    return out;
}

ParamRecord record_for(const Primitive& p, Strategy s, bool lenient) {
    return param_record(p, s, lenient);
}

/// Column order of the tabular formats. Point x_p/y_p share the line base
/// point columns.
std::vector<std::string_view> table_columns(Strategy s) {
    switch (s) {
    case Strategy::PointBased:
        return {"x_s", "y_s", "x_m", "y_m", "x_e", "y_e", "x_c", "y_c", "r", "x_p", "y_p"};
    case Strategy::Implicit:
        return {"x_p", "y_p", "v_x", "v_y", "d_s", "d_e", "x_c", "y_c", "r", "b_wc", "theta_s", "theta_e"};
    case Strategy::Overparameterized:
        break;
    }
    return {"x_p", "y_p", "v_x", "v_y", "d_s", "d_e", "x_s",  "y_s",     "x_m",    "y_m",
            "x_e", "y_e", "x_c", "y_c", "r",   "b_wc", "theta_s", "theta_e"};
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

Table primitive_table(const SketchGraph& sketch, const SerializationConfig& cfg) {
    Table t;
    const auto cols = table_columns(cfg.strategy);
    t.header = {"id", "type"};
    for (auto c : cols) {
        t.header.emplace_back(c);
    }
    for (const auto& e : sketch.primitives()) {
        const ParamRecord rec = record_for(e.primitive, cfg.strategy, false);
        std::vector<std::string> row{std::to_string(e.id.index), std::string(type_name(rec.type))};
        for (auto c : cols) {
            std::string cell;
            for (const auto& f : rec.fields) {
                if (f.name == c) {
                    cell = f.is_flag ? (f.value != 0.0 ? "true" : "false") : format_number(f.value, cfg.float_precision);
                }
            }
            row.push_back(std::move(cell));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table constraint_table(const SketchGraph& sketch) {
    Table t;
    t.header = {"index", "kind", "id_i", "subref_i", "id_j", "subref_j"};
    std::size_t i = 0;
    for (const auto& c : sketch.constraints()) {
        t.rows.push_back({std::to_string(i++), std::string(kind_name(c.kind)), std::to_string(c.first.id.index),
                          std::string(subref_name(c.first.sub)), std::to_string(c.second.id.index),
                          std::string(subref_name(c.second.sub))});
    }
    return t;
}

std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') {
            out += '"';
        }
        out += ch;
    }
    return out + "\"";
}

void write_csv(std::ostringstream& os, const Table& t) {
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            os << (i ? "," : "") << csv_cell(cells[i]);
        }
        os << '\n';
    };
    line(t.header);
    for (const auto& r : t.rows) {
        line(r);
    }
}

void write_markdown(std::ostringstream& os, const Table& t) {
    auto line = [&](const std::vector<std::string>& cells) {
        os << '|';
        for (const auto& c : cells) {
            os << ' ' << c << " |";
        }
        os << '\n';
    };
    line(t.header);
    os << '|';
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        os << " --- |";
    }
    os << '\n';
    for (const auto& r : t.rows) {
        line(r);
    }
}

std::string html_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

void write_html(std::ostringstream& os, const Table& t, std::string_view cls) {
    os << "<table class=\"" << cls << "\">\n<thead>\n<tr>";
    for (const auto& h : t.header) {
        os << "<th>" << html_escape(h) << "</th>";
    }
    os << "</tr>\n</thead>\n<tbody>\n";
    for (const auto& r : t.rows) {
        os << "<tr>";
        for (const auto& c : r) {
            os << "<td>" << html_escape(c) << "</td>";
        }
        os << "</tr>\n";
    }
    os << "</tbody>\n</table>\n";
}

const ojson& require(const ojson& obj, const char* key, const char* where) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw Error(ErrorCode::SchemaError, std::string(where) + " is missing \"" + key + "\"");
    }
    return obj.at(key);
}

std::uint32_t read_id(const ojson& v, const char* where) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0 || v.get<std::int64_t>() > 0xffffffffLL) {
        throw Error(ErrorCode::SchemaError, std::string(where) + " id must be a non-negative integer");
    }
    return static_cast<std::uint32_t>(v.get<std::int64_t>());
}

} // namespace

ojson to_json(const SketchGraph& sketch, const SerializationConfig& cfg) {
    ojson doc;
    doc["version"] = 1;
    doc["strategy"] = strategy_name(cfg.strategy);
    doc["next_id"] = sketch.next_id();
    ojson prims = ojson::array();
    const bool lenient = cfg.strategy == Strategy::Overparameterized;
    for (const auto& e : sketch.primitives()) {
        const ParamRecord rec = record_for(e.primitive, cfg.strategy, lenient);
        ojson params = ojson::object();
        for (const auto& f : rec.fields) {
            if (f.is_flag) {
                params[std::string(f.name)] = f.value != 0.0;
            } else {
                params[std::string(f.name)] = rounded(f.value, cfg.float_precision);
            }
        }
        ojson item;
        item["id"] = e.id.index;
        item["type"] = type_name(rec.type);
        item["params"] = std::move(params);
        prims.push_back(std::move(item));
    }
    doc["primitives"] = std::move(prims);
    ojson cons = ojson::array();
    for (const auto& c : sketch.constraints()) {
        ojson item;
        item["kind"] = kind_name(c.kind);
        item["refs"] = ojson::array({
            ojson{{"id", c.first.id.index}, {"subref", subref_name(c.first.sub)}},
            ojson{{"id", c.second.id.index}, {"subref", subref_name(c.second.sub)}},
        });
        cons.push_back(std::move(item));
    }
    doc["constraints"] = std::move(cons);
    return doc;
}

std::string serialize(const SketchGraph& sketch, const SerializationConfig& cfg) {
    if (cfg.format == Format::Json) {
        return to_json(sketch, cfg).dump(2) + "\n";
    }
    const Table prims = primitive_table(sketch, cfg);
    const Table cons = constraint_table(sketch);
    std::ostringstream os;
    switch (cfg.format) {
    case Format::Csv:
        write_csv(os, prims);
        os << '\n';
        write_csv(os, cons);
        break;
    case Format::Markdown:
        os << "### Primitives\n\n";
        write_markdown(os, prims);
        os << "\n### Constraints\n\n";
        write_markdown(os, cons);
        break;
    case Format::Html:
        write_html(os, prims, "primitives");
        write_html(os, cons, "constraints");
        break;
    case Format::Json:
        break;
    }
    return os.str();
}

SketchGraph from_json(const ojson& doc) {
    if (!doc.is_object()) {
        throw Error(ErrorCode::SchemaError, "sketch document must be a JSON object");
    }
    if (doc.contains("version") && doc.at("version") != 1) {
        throw Error(ErrorCode::SchemaError, "unsupported sketch document version");
    }
    Strategy strategy = Strategy::PointBased;
    if (doc.contains("strategy")) {
        const auto& s = doc.at("strategy");
        auto parsed = s.is_string() ? parse_strategy_name(s.get<std::string>()) : std::nullopt;
        if (!parsed) {
            throw Error(ErrorCode::SchemaError, "unknown strategy");
        }
        strategy = *parsed;
    }
    const ojson& prims = require(doc, "primitives", "document");
    const ojson& cons = require(doc, "constraints", "document");
    if (!prims.is_array() || !cons.is_array()) {
        throw Error(ErrorCode::SchemaError, "primitives and constraints must be arrays");
    }

    struct Parsed {
        std::uint32_t id;
        Primitive p;
    };
    std::vector<Parsed> items;
    for (const auto& item : prims) {
        const std::uint32_t id = read_id(require(item, "id", "primitive"), "primitive");
        const ojson& type_v = require(item, "type", "primitive");
        auto type = type_v.is_string() ? parse_type_name(type_v.get<std::string>()) : std::nullopt;
        if (!type) {
            throw Error(ErrorCode::SchemaError, "unknown primitive type");
        }
        const ojson& params = require(item, "params", "primitive");
        if (!params.is_object()) {
            throw Error(ErrorCode::SchemaError, "primitive params must be an object");
        }
        ParamRecord rec;
        rec.type = *type;
        for (auto name : field_names(*type, strategy)) {
            const std::string key(name);
            if (!params.contains(key)) {
                throw Error(ErrorCode::SchemaError,
                            "primitive " + std::to_string(id) + " is missing parameter \"" + key + "\"");
            }
            const ojson& v = params.at(key);
            if (v.is_boolean()) {
                rec.fields.push_back({name, v.get<bool>() ? 1.0 : 0.0, true});
            } else if (v.is_number()) {
                rec.fields.push_back({name, v.get<double>(), false});
            } else {
                throw Error(ErrorCode::SchemaError, "parameter \"" + key + "\" must be a number");
            }
        }
        try {
            items.push_back({id, primitive_from_record(rec, strategy)});
        } catch (const Error& e) {
            throw Error(ErrorCode::InvariantViolation, "primitive " + std::to_string(id) + ": " + e.what());
        }
    }
    std::sort(items.begin(), items.end(), [](const Parsed& a, const Parsed& b) { return a.id < b.id; });

    SketchGraph sketch;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0 && items[i].id == items[i - 1].id) {
            throw Error(ErrorCode::InvariantViolation, "duplicate primitive id " + std::to_string(items[i].id));
        }
        sketch.insert_with_id(PrimitiveId{items[i].id}, items[i].p);
    }
    if (doc.contains("next_id")) {
        sketch.reserve_ids(read_id(doc.at("next_id"), "next_id"));
    }

    for (const auto& item : cons) {
        const ojson& kind_v = require(item, "kind", "constraint");
        auto kind = kind_v.is_string() ? parse_kind_name(kind_v.get<std::string>()) : std::nullopt;
        if (!kind) {
            throw Error(ErrorCode::SchemaError, "unknown constraint kind");
        }
        const ojson& refs = require(item, "refs", "constraint");
        if (!refs.is_array() || refs.empty() || refs.size() > 2) {
            throw Error(ErrorCode::SchemaError, "constraint refs must hold one or two references");
        }
        Ref r[2];
        for (std::size_t k = 0; k < refs.size(); ++k) {
            r[k].id = PrimitiveId{read_id(require(refs[k], "id", "reference"), "reference")};
            r[k].sub = SubRef::Entire;
            if (refs[k].contains("subref")) {
                const auto& s = refs[k].at("subref");
                std::optional<SubRef> sub;
                if (s.is_string()) {
                    sub = parse_subref_name(s.get<std::string>());
                } else if (s.is_number_integer() && s.get<int>() >= 1 && s.get<int>() <= 4) {
                    sub = static_cast<SubRef>(s.get<int>());
                }
                if (!sub) {
                    throw Error(ErrorCode::SchemaError, "unknown sub-reference");
                }
                r[k].sub = *sub;
            }
        }
        if (refs.size() == 1) {
            r[1] = r[0];
        }
        try {
            sketch.add_constraint({*kind, r[0], r[1]});
        } catch (const Error& e) {
            throw Error(ErrorCode::InvariantViolation, e.what());
        }
    }
    return sketch;
}

SketchGraph parse_json(std::string_view text) {
    ojson doc;
    try {
        doc = ojson::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::SyntaxError, e.what());
    }
    return from_json(doc);
}

std::string to_document(const SketchGraph& sketch) {
    return serialize(sketch, {Format::Json, Strategy::Overparameterized, -1});
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw Error(ErrorCode::Io, "failed writing " + path.string());
    }
}

SketchGraph load_sketch(const std::filesystem::path& path) {
    return parse_json(read_text_file(path));
}

void save_sketch(const std::filesystem::path& path, const SketchGraph& sketch) {
    write_text_file(path, to_document(sketch));
}

} // namespace cadkit
