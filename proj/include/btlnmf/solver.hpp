#pragma once

#include <cstddef>
#include <functional>
#include <optional>

#include "btlnmf/types.hpp"

namespace btlnmf {

// Snapshot of one completed MM iteration: the post-normalization factors,
// a freshly evaluated objective, and the max-abs change that drives the
// termination test.
struct IterationState {
    FactorPair factors;
    double objective = 0.0;
    int iteration = 0;
    double max_abs_change = 0.0;
};

using IterationObserver = std::function<void(const IterationState&)>;

// One multiplicative W update. Rows of tournaments with no recorded matches
// are returned unchanged. eps = 0 reduces to the unmodified update.
Matrix update_w(const ComparisonTensor& data, const FactorPair& factors, double epsilon);

// One multiplicative H update against the freshly updated W, including the
// truncation max{., 0} that keeps H nonnegative after the -eps shift.
// Columns of players that appear in no pair set come out as zero. Entries of
// the incoming H that already sit below zero (the normalization can produce
// values in (-eps, 0)) are floored at their current value instead of zero so
// the update never increases the objective. If clamp_count is given it is
// incremented once per truncated coordinate.
Matrix update_h(const ComparisonTensor& data, const Matrix& w_next,
                const FactorPair& factors, double epsilon,
                std::size_t* clamp_count = nullptr);

// Rescale each row of W to sum to one and renormalize H globally so the
// likelihood is unchanged. The returned H may contain entries in (-eps, 0);
// H + eps stays strictly positive and the truncation inside the next H
// update restores nonnegativity.
FactorPair normalize_row(const FactorPair& factors, double epsilon);

// Rescale each column of W to sum to one; H is compensated per factor and
// then renormalized globally so its grand sum is exactly one and the
// likelihood is unchanged. Same caveat about tiny negative H entries.
FactorPair normalize_column(const FactorPair& factors, double epsilon);

// Full MM loop: W update, H update with truncation, normalization, and the
// max-abs-change termination test. The objective trace starts at the initial
// point, is evaluated at the exact per-iteration iterates, and is
// non-increasing (within 1e-10 per step). The returned factors have any
// sub-epsilon negatives from the last normalization truncated to zero.
// Reaching max_iterations is reported via converged = false, not an error.
FitResult fit(const ComparisonTensor& data, const SolverConfig& config,
              const std::optional<FactorPair>& init = std::nullopt,
              const IterationObserver& observer = {});

struct MultiRestartResult {
    FitResult best;
    std::size_t best_index = 0;
    // Final objective per restart; NaN marks a restart that failed with a
    // degeneracy error (only possible on pathological data).
    std::vector<double> all_objectives;
};

// Independent fits from seeds config.seed ^ r for r = 0..num_restarts-1,
// returning the best final objective (lowest restart index on ties). Restarts
// may run concurrently; results do not depend on scheduling. num_threads = 0
// means one thread per restart up to hardware parallelism.
MultiRestartResult multi_restart_fit(const ComparisonTensor& data, const SolverConfig& config,
                                     int num_restarts, unsigned num_threads = 0);

}  // namespace btlnmf
