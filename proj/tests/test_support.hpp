#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "btlnmf/types.hpp"

namespace test_support {

// Tensor from sparse (m, winner, loser, count) entries.
inline btlnmf::ComparisonTensor make_tensor(
    int num_tournaments, int num_players,
    const std::vector<std::tuple<int, int, int, std::int64_t>>& entries) {
    std::vector<btlnmf::CountMatrix> counts(
        static_cast<std::size_t>(num_tournaments),
        btlnmf::CountMatrix::Zero(num_players, num_players));
    for (const auto& [m, i, j, b] : entries) counts[static_cast<std::size_t>(m)](i, j) = b;
    std::vector<std::string> tournaments;
    std::vector<std::string> players;
    for (int m = 0; m < num_tournaments; ++m) tournaments.push_back("T" + std::to_string(m + 1));
    for (int i = 0; i < num_players; ++i) players.push_back("P" + std::to_string(i + 1));
    return btlnmf::ComparisonTensor(std::move(counts), std::move(tournaments),
                                    std::move(players));
}

inline double uniform_open_closed(std::mt19937_64& rng) {
    return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

inline btlnmf::FactorPair random_positive_factors(int num_tournaments, int num_players,
                                                  int rank, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    btlnmf::FactorPair factors;
    factors.w.resize(num_tournaments, rank);
    factors.h.resize(rank, num_players);
    for (Eigen::Index r = 0; r < factors.w.rows(); ++r)
        for (Eigen::Index c = 0; c < factors.w.cols(); ++c)
            factors.w(r, c) = uniform_open_closed(rng);
    for (Eigen::Index r = 0; r < factors.h.rows(); ++r)
        for (Eigen::Index c = 0; c < factors.h.cols(); ++c)
            factors.h(r, c) = uniform_open_closed(rng);
    return factors;
}

// Random tensor where every pair plays a few games in every tournament.
inline btlnmf::ComparisonTensor random_tensor(int num_tournaments, int num_players,
                                              int max_games, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::tuple<int, int, int, std::int64_t>> entries;
    for (int m = 0; m < num_tournaments; ++m) {
        for (int i = 0; i < num_players; ++i) {
            for (int j = i + 1; j < num_players; ++j) {
                const auto games = static_cast<std::int64_t>(rng() % (max_games + 1));
                const auto wins_i = games > 0 ? static_cast<std::int64_t>(rng() % (games + 1))
                                              : 0;
                if (wins_i > 0) entries.emplace_back(m, i, j, wins_i);
                if (games - wins_i > 0) entries.emplace_back(m, j, i, games - wins_i);
            }
        }
    }
    return make_tensor(num_tournaments, num_players, entries);
}

}  // namespace test_support
