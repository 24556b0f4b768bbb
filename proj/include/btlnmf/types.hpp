#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace btlnmf {

using Matrix = Eigen::MatrixXd;
using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

// Malformed or inconsistent input data (CSV, manifest, JSON results).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A log or probability could not be evaluated at the given point.
struct EvaluationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A zero denominator / zero row or column sum inside the solver.
struct DegeneracyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The comparison graph does not pin down a unique normalized solution.
struct IdentifiabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One unordered pair (i < j) that met in a tournament, with both directed
// win counts. Pair lists are kept sorted so every summation over them is
// reproducible run to run.
struct PairCounts {
    int i = 0;
    int j = 0;
    std::int64_t wins_ij = 0;  // times i beat j
    std::int64_t wins_ji = 0;  // times j beat i
};

// Per-tournament win-count tensor b_ij^(m) plus the derived pair sets.
class ComparisonTensor {
  public:
    ComparisonTensor(std::vector<CountMatrix> counts,
                     std::vector<std::string> tournament_names,
                     std::vector<std::string> player_names);

    int num_tournaments() const { return static_cast<int>(counts_.size()); }
    int num_players() const { return num_players_; }

    std::int64_t count(int m, int i, int j) const { return counts_[m](i, j); }
    const CountMatrix& tournament(int m) const { return counts_[m]; }

    // Pairs that met in tournament m, sorted by (i, j) with i < j.
    const std::vector<PairCounts>& pairs(int m) const { return pairs_[m]; }

    const std::vector<std::string>& tournament_names() const { return tournament_names_; }
    const std::vector<std::string>& player_names() const { return player_names_; }

    std::int64_t total_games() const;

  private:
    std::vector<CountMatrix> counts_;
    std::vector<std::vector<PairCounts>> pairs_;
    std::vector<std::string> tournament_names_;
    std::vector<std::string> player_names_;
    int num_players_ = 0;
};

// Nonnegative dictionary W (tournaments x factors) and coefficient
// matrix H (factors x players).
struct FactorPair {
    Matrix w;  // M x K
    Matrix h;  // K x N

    int num_tournaments() const { return static_cast<int>(w.rows()); }
    int rank() const { return static_cast<int>(w.cols()); }
    int num_players() const { return static_cast<int>(h.cols()); }
};

enum class Normalization { Row, Column, None };

std::string to_string(Normalization n);
Normalization normalization_from_string(const std::string& s);

struct SolverConfig {
    int rank = 2;
    double epsilon = 1e-300;
    double tolerance = 1e-6;
    int max_iterations = 20000;
    Normalization normalization = Normalization::Column;
    std::uint64_t seed = 0;
};

struct FitResult {
    FactorPair factors;
    Matrix lambda;                        // W * H, cached at the end of the run
    std::vector<double> objective_trace;  // f_eps per iteration; [0] is the initial point
    int iterations = 0;
    bool converged = false;
    double stationarity_residual = 0.0;
    std::size_t clamp_firings = 0;  // total coordinates truncated to zero
    std::vector<std::string> warnings;

    double final_objective() const { return objective_trace.back(); }
};

}  // namespace btlnmf
