#include "btlnmf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "btlnmf/format.hpp"

namespace btlnmf {

namespace {

double uniform_open_closed(std::mt19937_64& rng) {
    return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

// MM iteration for weighted BTL counts: skills_i <- wins_i / sum_j n_ij /
// (skill_i + skill_j), renormalized each sweep. Players with zero weighted
// wins are pinned at zero. Counts may be fractional (EM responsibilities).
struct WeightedBtlFit {
    Eigen::VectorXd skills;
    int iterations = 0;
    bool converged = false;
};

WeightedBtlFit weighted_btl_mm(const Matrix& counts, Eigen::VectorXd skills,
                               double tolerance, int max_iterations) {
    const int n = static_cast<int>(counts.rows());
    const Eigen::VectorXd wins = counts.rowwise().sum();
    Matrix games = counts + counts.transpose();

    WeightedBtlFit fit;
    double total = skills.sum();
    if (total > 0.0) skills /= total;
    for (int iter = 1; iter <= max_iterations; ++iter) {
        Eigen::VectorXd next(n);
        for (int i = 0; i < n; ++i) {
            if (wins[i] == 0.0) {
                next[i] = 0.0;
                continue;
            }
            double denom = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j == i || games(i, j) == 0.0) continue;
                denom += games(i, j) / (skills[i] + skills[j]);
            }
            next[i] = denom > 0.0 ? wins[i] / denom : 0.0;
        }
        const double sum = next.sum();
        if (sum <= 0.0) {
            throw DegeneracyError("weighted BTL iteration produced an all-zero skill vector");
        }
        next /= sum;
        const double diff = (next - skills).cwiseAbs().maxCoeff();
        skills = std::move(next);
        fit.iterations = iter;
        if (diff < tolerance) {
            fit.converged = true;
            break;
        }
    }
    fit.skills = std::move(skills);
    return fit;
}

double weighted_btl_loglik(const Matrix& counts, const Eigen::VectorXd& skills) {
    double ll = 0.0;
    const int n = static_cast<int>(counts.rows());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j || counts(i, j) == 0.0) continue;
            ll += counts(i, j) * std::log(skills[i] / (skills[i] + skills[j]));
        }
    }
    return ll;
}

std::vector<std::vector<int>> connected_components(const CountMatrix& counts) {
    const int n = static_cast<int>(counts.rows());
    std::vector<int> component(n, -1);
    std::vector<std::vector<int>> groups;
    for (int start = 0; start < n; ++start) {
        if (component[start] >= 0) continue;
        const int id = static_cast<int>(groups.size());
        groups.emplace_back();
        std::vector<int> stack{start};
        component[start] = id;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            groups[id].push_back(v);
            for (int u = 0; u < n; ++u) {
                if (component[u] < 0 && (counts(v, u) + counts(u, v)) > 0) {
                    component[u] = id;
                    stack.push_back(u);
                }
            }
        }
    }
    for (auto& g : groups) std::sort(g.begin(), g.end());
    return groups;
}

}  // namespace

AggregatedCounts aggregate(const ComparisonTensor& data) {
    AggregatedCounts agg;
    agg.counts = CountMatrix::Zero(data.num_players(), data.num_players());
    for (int m = 0; m < data.num_tournaments(); ++m) agg.counts += data.tournament(m);
    agg.player_names = data.player_names();
    return agg;
}

BtlResult btl_mle(const AggregatedCounts& agg, double tolerance, int max_iterations) {
    const int n = agg.num_players();
    if (n < 1) throw std::invalid_argument("btl_mle: empty player set");

    const auto components = connected_components(agg.counts);
    if (components.size() > 1) {
        std::string msg = "comparison graph is disconnected:";
        for (const auto& group : components) {
            msg += " {";
            for (std::size_t t = 0; t < group.size(); ++t) {
                if (t > 0) msg += ", ";
                msg += agg.player_names[static_cast<std::size_t>(group[t])];
            }
            msg += "}";
        }
        throw IdentifiabilityError(msg);
    }

    BtlResult result;
    for (int i = 0; i < n; ++i) {
        if (agg.counts.row(i).sum() == 0) {
            result.warnings.push_back(format("player '%s' has zero wins; skill pinned at zero",
                                             agg.player_names[static_cast<std::size_t>(i)].c_str()));
        }
    }

    const Matrix counts = agg.counts.cast<double>();
    WeightedBtlFit fit = weighted_btl_mm(counts, Eigen::VectorXd::Constant(n, 1.0 / n),
                                         tolerance, max_iterations);
    result.skills = std::move(fit.skills);
    result.iterations = fit.iterations;
    result.converged = fit.converged;
    result.log_likelihood = weighted_btl_loglik(counts, result.skills);
    return result;
}

MixtureFitResult mixture_btl_em(const AggregatedCounts& agg, int num_components,
                                int num_restarts, std::uint64_t seed, double tolerance,
                                int max_iterations) {
    if (num_components < 1) throw std::invalid_argument("num_components must be at least 1");
    if (num_restarts < 1) throw std::invalid_argument("num_restarts must be at least 1");
    if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");

    const int n = agg.num_players();
    const int k_comp = num_components;
    const Matrix counts = agg.counts.cast<double>();
    const double total_games = counts.sum();

    MixtureFitResult out;
    BtlResult base = btl_mle(agg);
    out.warnings = base.warnings;

    // Perturbation base: the MLE with zero entries lifted so every component
    // start is strictly positive.
    Eigen::VectorXd base_skills = base.skills;
    const double floor = 1e-3 / n;
    for (int i = 0; i < n; ++i) base_skills[i] = std::max(base_skills[i], floor);
    base_skills /= base_skills.sum();

    // Directed observations with b_ij > 0, in row-major order.
    struct Observation {
        int i;
        int j;
        double count;
    };
    std::vector<Observation> observations;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && counts(i, j) > 0.0) observations.push_back({i, j, counts(i, j)});

    auto mixture_loglik = [&](const Matrix& components, const Eigen::VectorXd& weights) {
        double ll = 0.0;
        for (const auto& obs : observations) {
            double mix = 0.0;
            for (int k = 0; k < k_comp; ++k) {
                const double si = components(k, obs.i);
                const double sj = components(k, obs.j);
                if (si > 0.0) mix += weights[k] * si / (si + sj);
            }
            ll += obs.count * std::log(std::max(mix, 1e-300));
        }
        return ll;
    };

    out.restart_log_likelihoods.assign(static_cast<std::size_t>(num_restarts), 0.0);
    out.restart_traces.resize(static_cast<std::size_t>(num_restarts));
    bool have_best = false;

    for (int r = 0; r < num_restarts; ++r) {
        std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(r));

        Matrix components(k_comp, n);
        for (int k = 0; k < k_comp; ++k) {
            for (int i = 0; i < n; ++i) {
                components(k, i) = base_skills[i] * (0.5 + uniform_open_closed(rng));
            }
            components.row(k) /= components.row(k).sum();
        }
        Eigen::VectorXd weights(k_comp);
        for (int k = 0; k < k_comp; ++k) weights[k] = -std::log(uniform_open_closed(rng));
        weights /= weights.sum();

        std::vector<bool> frozen(static_cast<std::size_t>(k_comp), false);
        auto& trace = out.restart_traces[static_cast<std::size_t>(r)];
        trace.clear();
        trace.push_back(mixture_loglik(components, weights));

        for (int iter = 0; iter < max_iterations; ++iter) {
            // E-step: responsibilities per directed observation.
            Matrix resp(static_cast<int>(observations.size()), k_comp);
            for (std::size_t o = 0; o < observations.size(); ++o) {
                const auto& obs = observations[o];
                double mix = 0.0;
                for (int k = 0; k < k_comp; ++k) {
                    const double si = components(k, obs.i);
                    const double sj = components(k, obs.j);
                    const double p = si > 0.0 ? si / (si + sj) : 0.0;
                    resp(static_cast<int>(o), k) = weights[k] * p;
                    mix += weights[k] * p;
                }
                if (mix > 0.0) {
                    resp.row(static_cast<int>(o)) /= mix;
                } else {
                    resp.row(static_cast<int>(o)).setConstant(1.0 / k_comp);
                }
            }

            // M-step: weights, then a weighted BTL solve per component warm
            // started at the current skills (generalized EM, still monotone).
            for (int k = 0; k < k_comp; ++k) {
                double mass = 0.0;
                for (std::size_t o = 0; o < observations.size(); ++o) {
                    mass += observations[o].count * resp(static_cast<int>(o), k);
                }
                const double weight = total_games > 0.0 ? mass / total_games : 1.0 / k_comp;
                if (weight < 1e-10 && !frozen[static_cast<std::size_t>(k)]) {
                    frozen[static_cast<std::size_t>(k)] = true;
                    out.warnings.push_back(
                        format("restart %d: component %d collapsed (weight < 1e-10); frozen",
                               r, k));
                }
                weights[k] = weight;
                if (frozen[static_cast<std::size_t>(k)]) continue;

                Matrix weighted = Matrix::Zero(n, n);
                for (std::size_t o = 0; o < observations.size(); ++o) {
                    const auto& obs = observations[o];
                    weighted(obs.i, obs.j) = obs.count * resp(static_cast<int>(o), k);
                }
                WeightedBtlFit fit =
                    weighted_btl_mm(weighted, components.row(k).transpose(), 1e-10, 500);
                components.row(k) = fit.skills.transpose();
            }
            weights /= weights.sum();

            trace.push_back(mixture_loglik(components, weights));
            const std::size_t len = trace.size();
            if (std::abs(trace[len - 1] - trace[len - 2]) < tolerance) break;
        }

        const double final_ll = trace.back();
        out.restart_log_likelihoods[static_cast<std::size_t>(r)] = final_ll;
        if (!have_best || final_ll > out.best.log_likelihood) {
            out.best.components = components;
            out.best.weights = weights;
            out.best.log_likelihood = final_ll;
            out.best_index = static_cast<std::size_t>(r);
            have_best = true;
        }
    }
    return out;
}

}  // namespace btlnmf
