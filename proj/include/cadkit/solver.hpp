#pragma once

#include "cadkit/sketch.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

namespace cadkit {

struct SolveOptions {
    /// Stop once the stacked residual norm drops to this value.
    double residual_tolerance = 1e-8;
    int max_iterations = 200;
    /// Floor added to the damping term so under-determined systems take the
    /// step of least parameter change, keeping geometry near where it was drawn.
    double anchor_weight = 1e-6;
};

struct SolveResult {
    SketchGraph solved;
    bool converged = false;
    double residual_norm = 0.0;
    int iterations = 0;
    /// Largest movement of any sub-reference point, center or radius.
    double max_displacement = 0.0;
};

struct CheckerOptions {
    SolveOptions solve;
    double validity_tolerance = 1e-6;
    /// Movement threshold relative to the sketch bounding-box diagonal.
    double movement_relative = 1e-4;
    /// Length/radius collapse threshold relative to the bounding-box diagonal.
    double degenerate_relative = 1e-6;
};

struct ConstraintReport {
    bool valid = false;
    bool causes_movement = false;
    bool degenerate = false;
    double residual_before = 0.0;
    double residual_after = 0.0;
    double max_displacement = 0.0;
    bool converged = false;
};

/// Stacked residuals of a sketch's constraints over a flat parameter vector:
/// lines (x_s, y_s, x_e, y_e), circles (x_c, y_c, r), arcs (x_c, y_c, r,
/// theta_s, theta_e), points (x, y).
///
/// Orientation constraints (horizontal, vertical, parallel, perpendicular)
/// measure the signed angle to a target direction, and circle-circle tangency
/// picks external or internal contact. Both choices are frozen from the
/// geometry the system is built from.
class ConstraintSystem {
public:
    explicit ConstraintSystem(const SketchGraph& sketch);

    std::size_t parameter_count() const { return static_cast<std::size_t>(x0_.size()); }
    std::size_t residual_count() const { return rows_; }
    const Eigen::VectorXd& initial_parameters() const { return x0_; }
    /// Row range [first, last) holding the residuals of one constraint.
    std::pair<std::size_t, std::size_t> rows_of(std::size_t constraint_index) const;

    void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& residuals, Eigen::MatrixXd* jacobian) const;

    /// Copy of the sketch with the parameters written back (radii made
    /// positive, angles folded into [0, 2pi)).
    SketchGraph apply(const Eigen::VectorXd& x) const;

private:
    struct Slot {
        PrimitiveType type;
        int offset;
        bool clockwise;
    };

    SketchGraph sketch_;
    std::vector<Slot> slots_;
    std::vector<int> constraint_slot_i_;
    std::vector<int> constraint_slot_j_;
    std::vector<std::int8_t> frozen_;
    std::vector<std::size_t> row_offset_;
    std::size_t rows_ = 0;
    Eigen::VectorXd x0_;

    void eval_constraint(std::size_t ci, const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* jac,
                         std::int8_t frozen) const;
    std::int8_t choose_frozen(std::size_t ci, const Eigen::VectorXd& x) const;
};

/// Residual vector of one constraint on the sketch as drawn; zero iff the
/// constraint holds.
std::vector<double> residual(const SketchGraph& sketch, const Constraint& c);

/// Damped least squares (Levenberg-Marquardt). The input is not modified.
SolveResult solve(const SketchGraph& sketch, const SolveOptions& options = {});

/// Validity and movement report for adding `c` to the sketch.
ConstraintReport check_constraint(const SketchGraph& sketch, const Constraint& c,
                                  const CheckerOptions& options = {});

double max_displacement(const SketchGraph& before, const SketchGraph& after);

/// True if any line is shorter than, or any circle/arc radius is below, `eps`.
bool has_degenerate_primitive(const SketchGraph& sketch, double eps);

/// Bounding-box diagonal used to scale tolerances (1 for a zero-size sketch).
double tolerance_scale(const SketchGraph& sketch);

} // namespace cadkit
