#pragma once

#include "btlnmf/types.hpp"

namespace btlnmf {

// Coordinates below this are treated as sitting on the nonnegativity
// boundary; the truncation step produces exact zeros, so anything strictly
// positive but tiny is still interior.
inline constexpr double kPositivityThreshold = 1e-12;

struct GradientPair {
    Matrix grad_w;  // d f_eps / d w_mk
    Matrix grad_h;  // d f_eps / d h_ki
};

struct Coordinate {
    char matrix = 'W';  // 'W' or 'H'
    int row = 0;
    int col = 0;
};

// First-order certificate at a nonnegative point: interior coordinates need
// zero gradient, boundary coordinates need nonnegative gradient. residual is
// the larger of the two violation measures.
struct StationarityReport {
    double residual = 0.0;
    Coordinate worst_coordinate;
    double interior_max_abs_grad = 0.0;
    double boundary_max_neg_grad = 0.0;
    double objective = 0.0;  // f_eps at the evaluation point, for scale
};

// Closed-form gradient of f_eps at the given factors.
GradientPair gradient(const ComparisonTensor& data, const FactorPair& factors,
                      double epsilon);

StationarityReport stationarity_residual(const ComparisonTensor& data,
                                         const FactorPair& factors, double epsilon,
                                         double positivity_threshold = kPositivityThreshold);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|,
// |central difference|). Only coordinates larger than 10 * step are perturbed
// so every evaluation point stays feasible.
double finite_difference_check(const ComparisonTensor& data, const FactorPair& factors,
                               double epsilon, double step);

}  // namespace btlnmf
