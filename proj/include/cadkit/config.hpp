#pragma once

#include "cadkit/solver.hpp"

#include <filesystem>
#include <optional>
#include <string_view>

namespace cadkit {

/// Defaults read from cadkit.toml.
///
///   [solver]   residual_tolerance, max_iterations
///   [checker]  validity_tolerance, movement_relative, degenerate_relative
///   [render]   image_size
///   [serialize] float_precision
///   [agent]    step_budget
struct Config {
    CheckerOptions checker;
    int image_size = 512;
    int float_precision = 6;
    int step_budget = 16;

    const SolveOptions& solve() const { return checker.solve; }
};

/// Subset of TOML: tables, comments, and `key = value` with numbers or
/// booleans. Unknown tables or keys throw SchemaError; bad lines SyntaxError.
Config parse_config(std::string_view text);
Config load_config(const std::filesystem::path& path);

/// Explicit path if given, else $CADKIT_CONFIG, else ./cadkit.toml when
/// present, else built-in defaults.
Config resolve_config(const std::optional<std::filesystem::path>& explicit_path);

} // namespace cadkit
