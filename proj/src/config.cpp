#include "cadkit/config.hpp"

#include "cadkit/serialization.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>
#include <string>

namespace cadkit {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_number(std::string_view v, int line) {
    std::string clean;
    for (const char c : v) {
        if (c != '_') {
            clean.push_back(c);
        }
    }
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(clean.data(), clean.data() + clean.size(), out);
    if (ec != std::errc() || ptr != clean.data() + clean.size()) {
        throw Error(ErrorCode::SyntaxError, "line " + std::to_string(line) + ": expected a number, got '" +
                                                std::string(v) + "'");
    }
    return out;
}

int parse_int(std::string_view v, int line) {
    const double d = parse_number(v, line);
    if (d != static_cast<int>(d) || d <= 0) {
        throw Error(ErrorCode::SchemaError, "line " + std::to_string(line) + ": expected a positive integer");
    }
    return static_cast<int>(d);
}

double parse_positive(std::string_view v, int line) {
    const double d = parse_number(v, line);
    if (!(d > 0)) {
        throw Error(ErrorCode::SchemaError, "line " + std::to_string(line) + ": expected a positive number");
    }
    return d;
}

} // namespace

Config parse_config(std::string_view text) {
    Config cfg;
    using Setter = std::function<void(std::string_view, int)>;
    const std::map<std::string, Setter> setters{
        {"solver.residual_tolerance", [&](auto v, int l) { cfg.checker.solve.residual_tolerance = parse_positive(v, l); }},
        {"solver.max_iterations", [&](auto v, int l) { cfg.checker.solve.max_iterations = parse_int(v, l); }},
        {"checker.validity_tolerance", [&](auto v, int l) { cfg.checker.validity_tolerance = parse_positive(v, l); }},
        {"checker.movement_relative", [&](auto v, int l) { cfg.checker.movement_relative = parse_positive(v, l); }},
        {"checker.degenerate_relative", [&](auto v, int l) { cfg.checker.degenerate_relative = parse_positive(v, l); }},
        {"render.image_size", [&](auto v, int l) { cfg.image_size = parse_int(v, l); }},
        {"serialize.float_precision", [&](auto v, int l) { cfg.float_precision = parse_int(v, l); }},
        {"agent.step_budget", [&](auto v, int l) { cfg.step_budget = parse_int(v, l); }},
    };

    std::string table;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw Error(ErrorCode::SyntaxError, "line " + std::to_string(line_no) + ": unterminated table header");
            }
            table = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::SyntaxError, "line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = table + "." + std::string(trim(line.substr(0, eq)));
        const auto it = setters.find(key);
        if (it == setters.end()) {
            throw Error(ErrorCode::SchemaError, "line " + std::to_string(line_no) + ": unknown setting '" + key + "'");
        }
        it->second(trim(line.substr(eq + 1)), line_no);
    }
    return cfg;
}

Config load_config(const std::filesystem::path& path) {
    try {
        return parse_config(read_text_file(path));
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

Config resolve_config(const std::optional<std::filesystem::path>& explicit_path) {
    if (explicit_path) {
        return load_config(*explicit_path);
    }
    if (const char* env = std::getenv("CADKIT_CONFIG"); env && *env) {
        return load_config(env);
    }
    if (std::filesystem::is_regular_file("cadkit.toml")) {
        return load_config("cadkit.toml");
    }
    return Config{};
}

} // namespace cadkit
