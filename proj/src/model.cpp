#include "btlnmf/model.hpp"

#include <cmath>
#include <utility>

#include "btlnmf/format.hpp"

namespace btlnmf {

ComparisonTensor::ComparisonTensor(std::vector<CountMatrix> counts,
                                   std::vector<std::string> tournament_names,
                                   std::vector<std::string> player_names)
    : counts_(std::move(counts)),
      tournament_names_(std::move(tournament_names)),
      player_names_(std::move(player_names)) {
    if (counts_.empty()) {
        throw ParseError("comparison tensor needs at least one tournament");
    }
    num_players_ = static_cast<int>(counts_.front().rows());
    if (num_players_ < 1) {
        throw ParseError("comparison tensor needs at least one player");
    }
    if (tournament_names_.size() != counts_.size()) {
        throw ParseError("tournament name count does not match tensor");
    }
    if (static_cast<int>(player_names_.size()) != num_players_) {
        throw ParseError("player name count does not match tensor");
    }
    for (std::size_t m = 0; m < counts_.size(); ++m) {
        const CountMatrix& b = counts_[m];
        if (b.rows() != num_players_ || b.cols() != num_players_) {
            throw ParseError(format("tournament %zu is not %d x %d", m, num_players_,
                                    num_players_));
        }
        for (int i = 0; i < num_players_; ++i) {
            if (b(i, i) != 0) {
                throw ParseError(format("nonzero diagonal entry at (m=%zu, i=%d)", m, i));
            }
            for (int j = 0; j < num_players_; ++j) {
                if (b(i, j) < 0) {
                    throw ParseError(
                        format("negative count at (m=%zu, i=%d, j=%d)", m, i, j));
                }
            }
        }
    }
    pairs_.resize(counts_.size());
    for (std::size_t m = 0; m < counts_.size(); ++m) {
        const CountMatrix& b = counts_[m];
        for (int i = 0; i < num_players_; ++i) {
            for (int j = i + 1; j < num_players_; ++j) {
                if (b(i, j) + b(j, i) > 0) {
                    pairs_[m].push_back(PairCounts{i, j, b(i, j), b(j, i)});
                }
            }
        }
    }
}

std::int64_t ComparisonTensor::total_games() const {
    std::int64_t total = 0;
    for (const auto& b : counts_) total += b.sum();
    return total;
}

std::string to_string(Normalization n) {
    switch (n) {
        case Normalization::Row: return "row";
        case Normalization::Column: return "column";
        case Normalization::None: return "none";
    }
    return "unknown";
}

Normalization normalization_from_string(const std::string& s) {
    if (s == "row") return Normalization::Row;
    if (s == "column") return Normalization::Column;
    if (s == "none") return Normalization::None;
    throw ParseError("unknown normalization '" + s + "' (expected row|column|none)");
}

double btl_win_prob(double skill_i, double skill_j) {
    if (skill_i < 0.0 || skill_j < 0.0) {
        throw EvaluationError("btl_win_prob: skills must be nonnegative");
    }
    const double total = skill_i + skill_j;
    if (total <= 0.0) {
        throw EvaluationError("btl_win_prob: both skills are zero, probability undefined");
    }
    return skill_i / total;
}

Matrix skill_matrix(const FactorPair& factors, double epsilon) {
    if (epsilon == 0.0) return factors.w * factors.h;
    return factors.w * (factors.h.array() + epsilon).matrix();
}

Matrix lambda_matrix(const FactorPair& factors) { return factors.w * factors.h; }

double neg_log_likelihood(const ComparisonTensor& data, const FactorPair& factors,
                          double epsilon) {
    const Matrix a = skill_matrix(factors, epsilon);
    double objective = 0.0;
    for (int m = 0; m < data.num_tournaments(); ++m) {
        for (const PairCounts& p : data.pairs(m)) {
            const double a_i = a(m, p.i);
            const double a_j = a(m, p.j);
            const double a_sum = a_i + a_j;
            if (p.wins_ij > 0) {
                if (a_i <= 0.0 || a_sum <= 0.0) {
                    throw EvaluationError(format(
                        "non-positive log argument at (m=%d, i=%d, j=%d)", m, p.i, p.j));
                }
                objective += static_cast<double>(p.wins_ij) * (-std::log(a_i) + std::log(a_sum));
            }
            if (p.wins_ji > 0) {
                if (a_j <= 0.0 || a_sum <= 0.0) {
                    throw EvaluationError(format(
                        "non-positive log argument at (m=%d, i=%d, j=%d)", m, p.j, p.i));
                }
                objective += static_cast<double>(p.wins_ji) * (-std::log(a_j) + std::log(a_sum));
            }
        }
    }
    return objective;
}

}  // namespace btlnmf
