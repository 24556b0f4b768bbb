#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "btlnmf/types.hpp"

namespace btlnmf {

// Win counts summed over tournaments: b_ij = sum_m b_ij^(m).
struct AggregatedCounts {
    CountMatrix counts;  // N x N, zero diagonal
    std::vector<std::string> player_names;

    int num_players() const { return static_cast<int>(counts.rows()); }
};

AggregatedCounts aggregate(const ComparisonTensor& data);

struct BtlResult {
    Eigen::VectorXd skills;  // normalized to sum one
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;
};

// Maximum-likelihood BTL skills via the classic minorization-maximization
// iteration. Throws IdentifiabilityError when the comparison graph is
// disconnected; players with zero wins get skill zero and a warning.
BtlResult btl_mle(const AggregatedCounts& agg, double tolerance = 1e-10,
                  int max_iterations = 10000);

struct MixtureBtlModel {
    Matrix components;        // K x N skill vectors, each normalized to sum one
    Eigen::VectorXd weights;  // K mixture weights summing to one
    double log_likelihood = 0.0;
};

struct MixtureFitResult {
    MixtureBtlModel best;
    std::size_t best_index = 0;
    std::vector<double> restart_log_likelihoods;        // final value per restart
    std::vector<std::vector<double>> restart_traces;    // per-iteration values
    std::vector<std::string> warnings;
};

// EM for a mixture of BTL models where every recorded game is independently
// attributed to a latent component. Components are initialized from perturbed
// copies of the single-BTL MLE with Dirichlet-uniform weights; restart r uses
// seed ^ r. Per-restart log-likelihood traces are non-decreasing.
MixtureFitResult mixture_btl_em(const AggregatedCounts& agg, int num_components,
                                int num_restarts, std::uint64_t seed,
                                double tolerance = 1e-8, int max_iterations = 5000);

}  // namespace btlnmf
