#include "btlnmf/solver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "btlnmf/diagnostics.hpp"
#include "btlnmf/format.hpp"
#include "btlnmf/model.hpp"

namespace btlnmf {

namespace {

// Uniform on (0, 1], derived from the raw 64-bit stream so draws are
// identical across standard library implementations.
double uniform_open_closed(std::mt19937_64& rng) {
    return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

void validate_config(const ComparisonTensor& data, const SolverConfig& config) {
    const int max_rank = std::min(data.num_tournaments(), data.num_players());
    if (config.rank < 1 || config.rank > max_rank) {
        throw std::invalid_argument(format("rank must be in [1, %d], got %d", max_rank,
                                           config.rank));
    }
    if (config.epsilon < 0.0) throw std::invalid_argument("epsilon must be nonnegative");
    if (!(config.tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (config.max_iterations < 1) {
        throw std::invalid_argument("max_iterations must be at least 1");
    }
}

FactorPair random_init(const ComparisonTensor& data, const SolverConfig& config) {
    std::mt19937_64 rng(config.seed);
    FactorPair factors;
    factors.w.resize(data.num_tournaments(), config.rank);
    factors.h.resize(config.rank, data.num_players());
    for (Eigen::Index r = 0; r < factors.w.rows(); ++r)
        for (Eigen::Index c = 0; c < factors.w.cols(); ++c)
            factors.w(r, c) = uniform_open_closed(rng);
    for (Eigen::Index r = 0; r < factors.h.rows(); ++r)
        for (Eigen::Index c = 0; c < factors.h.cols(); ++c)
            factors.h(r, c) = uniform_open_closed(rng);
    return factors;
}

void validate_init(const ComparisonTensor& data, const SolverConfig& config,
                   const FactorPair& init) {
    if (init.num_tournaments() != data.num_tournaments() || init.rank() != config.rank ||
        init.num_players() != data.num_players()) {
        throw std::invalid_argument("init factor dimensions do not match data/config");
    }
    if ((init.w.array() <= 0.0).any() || (init.h.array() <= 0.0).any()) {
        throw std::invalid_argument("init factors must have strictly positive entries");
    }
}

}  // namespace

Matrix update_w(const ComparisonTensor& data, const FactorPair& factors, double epsilon) {
    const int num_factors = factors.rank();
    const Matrix a = skill_matrix(factors, epsilon);
    Matrix w_next = factors.w;
    std::vector<double> num(num_factors);
    std::vector<double> den(num_factors);

    for (int m = 0; m < data.num_tournaments(); ++m) {
        const auto& pairs = data.pairs(m);
        if (pairs.empty()) continue;  // no update signal, row stays frozen
        std::fill(num.begin(), num.end(), 0.0);
        std::fill(den.begin(), den.end(), 0.0);
        for (const PairCounts& p : pairs) {
            const double a_i = a(m, p.i);
            const double a_j = a(m, p.j);
            const double a_sum = a_i + a_j;
            if (p.wins_ij > 0 && a_i <= 0.0) {
                throw DegeneracyError(format(
                    "update_w: zero skill sum [W(H+eps)] at (m=%d, i=%d)", m, p.i));
            }
            if (p.wins_ji > 0 && a_j <= 0.0) {
                throw DegeneracyError(format(
                    "update_w: zero skill sum [W(H+eps)] at (m=%d, i=%d)", m, p.j));
            }
            for (int k = 0; k < num_factors; ++k) {
                const double w_mk = factors.w(m, k);
                const double h_ki = factors.h(k, p.i) + epsilon;
                const double h_kj = factors.h(k, p.j) + epsilon;
                if (p.wins_ij > 0) {
                    const double b = static_cast<double>(p.wins_ij);
                    num[k] += b * w_mk * h_ki / a_i;
                    den[k] += b * (h_ki + h_kj) / a_sum;
                }
                if (p.wins_ji > 0) {
                    const double b = static_cast<double>(p.wins_ji);
                    num[k] += b * w_mk * h_kj / a_j;
                    den[k] += b * (h_kj + h_ki) / a_sum;
                }
            }
        }
        for (int k = 0; k < num_factors; ++k) {
            if (den[k] == 0.0) {
                // A factor the objective does not depend on (all relevant H
                // entries zero at eps = 0) carries no signal; leave it alone.
                if (num[k] == 0.0) continue;
                throw DegeneracyError(
                    format("update_w: zero denominator at (m=%d, k=%d)", m, k));
            }
            w_next(m, k) = num[k] / den[k];
        }
    }
    return w_next;
}

Matrix update_h(const ComparisonTensor& data, const Matrix& w_next,
                const FactorPair& factors, double epsilon, std::size_t* clamp_count) {
    const int num_factors = factors.rank();
    const int num_players = factors.num_players();
    const Matrix a = epsilon == 0.0
                         ? Matrix(w_next * factors.h)
                         : Matrix(w_next * (factors.h.array() + epsilon).matrix());
    Matrix num = Matrix::Zero(num_factors, num_players);
    Matrix den = Matrix::Zero(num_factors, num_players);

    for (int m = 0; m < data.num_tournaments(); ++m) {
        for (const PairCounts& p : data.pairs(m)) {
            const double a_i = a(m, p.i);
            const double a_j = a(m, p.j);
            const double a_sum = a_i + a_j;
            if (p.wins_ij > 0 && a_i <= 0.0) {
                throw DegeneracyError(format(
                    "update_h: zero skill sum [W(H+eps)] at (m=%d, i=%d)", m, p.i));
            }
            if (p.wins_ji > 0 && a_j <= 0.0) {
                throw DegeneracyError(format(
                    "update_h: zero skill sum [W(H+eps)] at (m=%d, i=%d)", m, p.j));
            }
            if (a_sum <= 0.0) {
                throw DegeneracyError(format(
                    "update_h: zero pair skill sum at (m=%d, i=%d, j=%d)", m, p.i, p.j));
            }
            const double b_sum = static_cast<double>(p.wins_ij + p.wins_ji);
            for (int k = 0; k < num_factors; ++k) {
                const double w_mk = w_next(m, k);
                if (p.wins_ij > 0) {
                    num(k, p.i) += static_cast<double>(p.wins_ij) * w_mk *
                                   (factors.h(k, p.i) + epsilon) / a_i;
                }
                if (p.wins_ji > 0) {
                    num(k, p.j) += static_cast<double>(p.wins_ji) * w_mk *
                                   (factors.h(k, p.j) + epsilon) / a_j;
                }
                den(k, p.i) += b_sum * w_mk / a_sum;
                den(k, p.j) += b_sum * w_mk / a_sum;
            }
        }
    }

    Matrix h_next(num_factors, num_players);
    for (int k = 0; k < num_factors; ++k) {
        for (int i = 0; i < num_players; ++i) {
            double quotient;
            if (den(k, i) == 0.0) {
                if (num(k, i) != 0.0) {
                    throw DegeneracyError(
                        format("update_h: zero denominator at (k=%d, i=%d)", k, i));
                }
                quotient = 0.0;  // player unseen by any pair set, or dead factor
            } else {
                quotient = num(k, i) / den(k, i);
            }
            const double raw = quotient - epsilon;
            // Truncation floor: exactly max{raw, 0} for nonnegative H. Entries
            // the renormalization left in (-eps, 0) keep their value, so the
            // previous point stays inside the minimizer's constraint set and
            // the update never increases the objective.
            const double floor = std::min(0.0, factors.h(k, i));
            if (raw < floor) {
                h_next(k, i) = floor;
                if (clamp_count != nullptr) ++*clamp_count;
            } else {
                h_next(k, i) = raw;
            }
        }
    }
    return h_next;
}

FactorPair normalize_row(const FactorPair& factors, double epsilon) {
    const double kn = static_cast<double>(factors.rank()) * factors.num_players();
    FactorPair out;
    out.w = factors.w;
    for (Eigen::Index m = 0; m < out.w.rows(); ++m) {
        const double row_sum = out.w.row(m).sum();
        if (row_sum <= 0.0) {
            throw DegeneracyError(format("normalize_row: row sum of W is zero at m=%lld",
                                         static_cast<long long>(m)));
        }
        out.w.row(m) /= row_sum;
    }
    const double alpha = (factors.h.sum() + kn * epsilon) / (1.0 + kn * epsilon);
    if (alpha <= 0.0) {
        throw DegeneracyError("normalize_row: global H normalizer is not positive");
    }
    out.h = (factors.h.array() + (1.0 - alpha) * epsilon).matrix() / alpha;
    return out;
}

FactorPair normalize_column(const FactorPair& factors, double epsilon) {
    const double kn = static_cast<double>(factors.rank()) * factors.num_players();
    FactorPair out;
    out.w = factors.w;
    Matrix h_hat = factors.h;
    for (Eigen::Index k = 0; k < out.w.cols(); ++k) {
        const double col_sum = out.w.col(k).sum();
        if (col_sum <= 0.0) {
            throw DegeneracyError(format("normalize_column: column sum of W is zero at k=%lld",
                                         static_cast<long long>(k)));
        }
        out.w.col(k) /= col_sum;
        h_hat.row(k) = (factors.h.row(k).array() * col_sum + epsilon * (col_sum - 1.0)).matrix();
    }
    const double beta = (h_hat.sum() + kn * epsilon) / (1.0 + kn * epsilon);
    if (beta <= 0.0) {
        throw DegeneracyError("normalize_column: global H normalizer is not positive");
    }
    out.h = (h_hat.array() + (1.0 - beta) * epsilon).matrix() / beta;
    return out;
}

FitResult fit(const ComparisonTensor& data, const SolverConfig& config,
              const std::optional<FactorPair>& init, const IterationObserver& observer) {
    validate_config(data, config);
    if (init) validate_init(data, config, *init);
    FactorPair factors = init ? *init : random_init(data, config);

    FitResult result;
    for (int m = 0; m < data.num_tournaments(); ++m) {
        if (data.pairs(m).empty()) {
            result.warnings.push_back(format(
                "tournament '%s' has no recorded matches; its W row keeps its initial value",
                data.tournament_names()[m].c_str()));
        }
    }
    {
        std::vector<std::int64_t> matches(data.num_players(), 0);
        for (int m = 0; m < data.num_tournaments(); ++m) {
            for (const PairCounts& p : data.pairs(m)) {
                matches[p.i] += p.wins_ij + p.wins_ji;
                matches[p.j] += p.wins_ij + p.wins_ji;
            }
        }
        for (int i = 0; i < data.num_players(); ++i) {
            if (matches[i] == 0) {
                result.warnings.push_back(format(
                    "player '%s' has no matches; skill unidentifiable, H column goes to zero",
                    data.player_names()[i].c_str()));
            }
        }
    }

    result.objective_trace.push_back(neg_log_likelihood(data, factors, config.epsilon));

    bool converged = false;
    int iteration = 0;
    while (iteration < config.max_iterations && !converged) {
        ++iteration;
        const Matrix w_next = update_w(data, factors, config.epsilon);
        const Matrix h_next =
            update_h(data, w_next, factors, config.epsilon, &result.clamp_firings);

        FactorPair updated{w_next, h_next};
        FactorPair next;
        switch (config.normalization) {
            case Normalization::Row: next = normalize_row(updated, config.epsilon); break;
            case Normalization::Column: next = normalize_column(updated, config.epsilon); break;
            case Normalization::None: next = std::move(updated); break;
        }
        // The iterate is the exact normalization output. H entries may sit in
        // (-eps, 0); H + eps stays strictly positive, the update's truncation
        // floor absorbs them, and the returned factors are cleaned up last.

        const double diff = std::max((next.w - factors.w).cwiseAbs().maxCoeff(),
                                     (next.h - factors.h).cwiseAbs().maxCoeff());
        factors = std::move(next);
        result.objective_trace.push_back(neg_log_likelihood(data, factors, config.epsilon));
        converged = diff < config.tolerance;
        if (observer) {
            observer(IterationState{factors, result.objective_trace.back(), iteration, diff});
        }
    }

    // The returned factors are nonnegative: the last normalization's
    // sub-epsilon negatives are truncated. At convergence these are zero to
    // machine precision, so the final trace entry still describes the result.
    for (Eigen::Index k = 0; k < factors.h.rows(); ++k) {
        for (Eigen::Index i = 0; i < factors.h.cols(); ++i) {
            if (factors.h(k, i) < 0.0) {
                factors.h(k, i) = 0.0;
                ++result.clamp_firings;
            }
        }
    }
    result.factors = std::move(factors);
    result.lambda = lambda_matrix(result.factors);
    result.iterations = iteration;
    result.converged = converged;
    result.stationarity_residual =
        stationarity_residual(data, result.factors, config.epsilon, kPositivityThreshold)
            .residual;
    return result;
}

MultiRestartResult multi_restart_fit(const ComparisonTensor& data, const SolverConfig& config,
                                     int num_restarts, unsigned num_threads) {
    if (num_restarts < 1) throw std::invalid_argument("num_restarts must be at least 1");
    validate_config(data, config);

    MultiRestartResult out;
    out.all_objectives.assign(static_cast<std::size_t>(num_restarts),
                              std::numeric_limits<double>::quiet_NaN());
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(num_restarts));

    std::mutex best_mutex;
    bool have_best = false;
    std::atomic<int> next_restart{0};

    auto worker = [&]() {
        for (;;) {
            const int r = next_restart.fetch_add(1);
            if (r >= num_restarts) return;
            SolverConfig restart_config = config;
            restart_config.seed = config.seed ^ static_cast<std::uint64_t>(r);
            try {
                FitResult result = fit(data, restart_config);
                const double objective = result.final_objective();
                std::lock_guard<std::mutex> lock(best_mutex);
                out.all_objectives[static_cast<std::size_t>(r)] = objective;
                const bool better =
                    !have_best || objective < out.best.final_objective() ||
                    (objective == out.best.final_objective() &&
                     static_cast<std::size_t>(r) < out.best_index);
                if (better) {
                    out.best = std::move(result);
                    out.best_index = static_cast<std::size_t>(r);
                    have_best = true;
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(best_mutex);
                errors[static_cast<std::size_t>(r)] = std::current_exception();
            }
        }
    };

    unsigned threads = num_threads;
    if (threads == 0) {
        const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        threads = std::min<unsigned>(hw, static_cast<unsigned>(num_restarts));
    }
    threads = std::min<unsigned>(threads, static_cast<unsigned>(num_restarts));

    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    if (!have_best) {
        for (const auto& err : errors) {
            if (err) std::rethrow_exception(err);
        }
        throw DegeneracyError("multi_restart_fit: no restart produced a result");
    }
    return out;
}

}  // namespace btlnmf
