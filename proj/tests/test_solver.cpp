#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "btlnmf/model.hpp"
#include "btlnmf/data_io.hpp"
#include "btlnmf/solver.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace btlnmf;
using test_support::make_tensor;
using test_support::random_positive_factors;
using test_support::random_tensor;

TEST_SUITE("update_w") {
    TEST_CASE("single-pair hand example") {
        const auto data = make_tensor(1, 2, {{0, 0, 1, 1}});
        FactorPair f{Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 2, 1.0)};
        const Matrix next = update_w(data, f, 0.0);
        CHECK(next(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    }
    TEST_CASE("rank one with eps zero is a fixed point") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto data = random_tensor(3, 4, 4, 100 + seed);
            const auto f = random_positive_factors(3, 4, 1, 200 + seed);
            const Matrix next = update_w(data, f, 0.0);
            for (int m = 0; m < 3; ++m) {
                CHECK(next(m, 0) == doctest::Approx(f.w(m, 0)).epsilon(1e-12));
            }
        }
    }
    TEST_CASE("tournament with no matches keeps its row") {
        const auto data = make_tensor(2, 3, {{0, 0, 1, 2}, {0, 1, 0, 1}});  // T2 empty
        const auto f = random_positive_factors(2, 3, 2, 7);
        const Matrix next = update_w(data, f, 1e-6);
        CHECK(next.row(1) == f.w.row(1));
        CHECK(next.row(0) != f.w.row(0));
    }
    TEST_CASE("matches the direct transcription at eps zero") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto data = random_tensor(4, 5, 5, 300 + seed);
            const auto f = random_positive_factors(4, 5, 3, 400 + seed);
            const Matrix expected = oracles::naive_update_w(data, f);
            const Matrix actual = update_w(data, f, 0.0);
            for (int m = 0; m < 4; ++m) {
                for (int k = 0; k < 3; ++k) {
                    CHECK(actual(m, k) == doctest::Approx(expected(m, k)).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_SUITE("update_h") {
    TEST_CASE("single-pair hand example") {
        const auto data = make_tensor(1, 2, {{0, 0, 1, 1}});
        FactorPair f{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 2, 1.0)};
        const Matrix next = update_h(data, f.w, f, 0.0);
        CHECK(next(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(next(0, 1) == 0.0);
    }
    TEST_CASE("truncation clamps a negative raw value to exactly zero") {
        // Loser's numerator is empty, so the raw value is 0 - eps = -0.3.
        const auto data = make_tensor(1, 2, {{0, 0, 1, 1}});
        FactorPair f{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 2, 1.0)};
        std::size_t clamped = 0;
        const Matrix next = update_h(data, f.w, f, 0.3, &clamped);
        CHECK(next(0, 1) == 0.0);
        CHECK(clamped == 1);
    }
    TEST_CASE("loser column goes to zero after one eps-zero update") {
        const auto data = make_tensor(1, 3, {{0, 0, 1, 2}, {0, 0, 2, 1}, {0, 2, 1, 1}});
        const auto f = random_positive_factors(1, 3, 1, 17);
        const Matrix next = update_h(data, f.w, f, 0.0);
        CHECK(next(0, 1) == 0.0);  // player 2 lost every match
        CHECK(next(0, 0) > 0.0);
        CHECK(next(0, 2) > 0.0);
    }
    TEST_CASE("player with no matches gets a zero column") {
        const auto data = make_tensor(1, 3, {{0, 0, 1, 1}, {0, 1, 0, 1}});  // P3 idle
        const auto f = random_positive_factors(1, 3, 2, 23);
        const Matrix next = update_h(data, f.w, f, 1e-6);
        CHECK(next(0, 2) == 0.0);
        CHECK(next(1, 2) == 0.0);
    }
    TEST_CASE("matches the direct transcription at eps zero") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto data = random_tensor(4, 5, 5, 500 + seed);
            const auto f = random_positive_factors(4, 5, 3, 600 + seed);
            const Matrix w_new = update_w(data, f, 0.0);
            const Matrix expected = oracles::naive_update_h(data, w_new, f);
            const Matrix actual = update_h(data, w_new, f, 0.0);
            for (int k = 0; k < 3; ++k) {
                for (int i = 0; i < 5; ++i) {
                    CHECK(actual(k, i) == doctest::Approx(expected(k, i)).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_SUITE("normalization") {
    TEST_CASE("row sums become one") {
        FactorPair f{Matrix::Constant(1, 2, 2.0), Matrix::Constant(2, 2, 0.25)};
        const FactorPair out = normalize_row(f, 0.0);
        CHECK(out.w(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(out.w(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
    }
    TEST_CASE("row mode at eps zero rescales H to grand sum one") {
        const auto f = random_positive_factors(3, 4, 2, 31);
        const FactorPair out = normalize_row(f, 0.0);
        CHECK(out.h.sum() == doctest::Approx(1.0).epsilon(1e-13));
    }
    TEST_CASE("column sums become one") {
        FactorPair f{Matrix::Constant(2, 1, 2.0), Matrix::Constant(1, 2, 0.25)};
        const FactorPair out = normalize_column(f, 0.0);
        CHECK(out.w(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(out.w(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
    }
    TEST_CASE("column mode H grand sum is one and lambda sums to one") {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            const auto f = random_positive_factors(4, 6, 3, 700 + seed);
            for (double eps : {0.0, 1e-6, 1e-300}) {
                const FactorPair out = normalize_column(f, eps);
                CHECK(std::abs(out.h.sum() - 1.0) <= 1e-12);
                CHECK(std::abs(lambda_matrix(out).sum() - 1.0) <= 1e-12);
                for (int k = 0; k < 3; ++k) {
                    CHECK(std::abs(out.w.col(k).sum() - 1.0) <= 1e-12);
                }
            }
        }
    }
    TEST_CASE("likelihood is invariant under both normalizations") {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            const auto data = random_tensor(4, 6, 5, 800 + seed);
            const auto f = random_positive_factors(4, 6, 3, 850 + seed);
            for (double eps : {0.0, 1e-6, 1e-300}) {
                const double before = neg_log_likelihood(data, f, eps);
                const double after_row = neg_log_likelihood(data, normalize_row(f, eps), eps);
                const double after_col =
                    neg_log_likelihood(data, normalize_column(f, eps), eps);
                CHECK(std::abs(after_row - before) <= 1e-10 * std::abs(before));
                CHECK(std::abs(after_col - before) <= 1e-10 * std::abs(before));
            }
        }
    }
    TEST_CASE("pairwise win probabilities are unchanged") {
        const auto f = random_positive_factors(3, 5, 2, 41);
        const double eps = 1e-6;
        const Matrix base = skill_matrix(f, eps);
        for (const FactorPair& out : {normalize_row(f, eps), normalize_column(f, eps)}) {
            const Matrix scaled = skill_matrix(out, eps);
            for (int m = 0; m < 3; ++m) {
                for (int i = 0; i < 5; ++i) {
                    for (int j = 0; j < 5; ++j) {
                        if (i == j) continue;
                        const double p0 = base(m, i) / (base(m, i) + base(m, j));
                        const double p1 = scaled(m, i) / (scaled(m, i) + scaled(m, j));
                        CHECK(std::abs(p1 - p0) <= 1e-10);
                    }
                }
            }
        }
    }
    TEST_CASE("zero row sum raises a degeneracy error") {
        FactorPair f{Matrix::Zero(2, 2), Matrix::Constant(2, 2, 1.0)};
        f.w.row(1).setConstant(1.0);
        CHECK_THROWS_AS(normalize_row(f, 1e-6), DegeneracyError);
    }
    TEST_CASE("zero column sum raises a degeneracy error") {
        FactorPair f{Matrix::Zero(2, 2), Matrix::Constant(2, 2, 1.0)};
        f.w.col(1).setConstant(1.0);
        CHECK_THROWS_AS(normalize_column(f, 1e-6), DegeneracyError);
    }
}

TEST_SUITE("fit") {
    TEST_CASE("two players recover the closed-form MLE ratio") {
        const auto data = make_tensor(1, 2, {{0, 0, 1, 3}, {0, 1, 0, 1}});
        SolverConfig config;
        config.rank = 1;
        config.seed = 5;
        const FitResult result = fit(data, config);
        CHECK(result.converged);
        const double ratio = result.lambda(0, 0) / (result.lambda(0, 0) + result.lambda(0, 1));
        CHECK(ratio == doctest::Approx(0.75).epsilon(1e-6));
    }
    TEST_CASE("objective trace is monotone for all normalizations and epsilons") {
        for (auto norm : {Normalization::Row, Normalization::Column, Normalization::None}) {
            for (double eps : {0.0, 1e-6, 1e-300}) {
                for (std::uint64_t seed = 0; seed < 4; ++seed) {
                    const auto synthetic = random_tensor(3, 5, 3, 900 + seed);
                    SolverConfig config;
                    config.rank = 2;
                    config.epsilon = eps;
                    config.normalization = norm;
                    config.seed = seed;
                    config.max_iterations = 400;
                    const FitResult result = fit(synthetic, config);
                    for (std::size_t l = 0; l + 1 < result.objective_trace.size(); ++l) {
                        CHECK(result.objective_trace[l + 1] <=
                              result.objective_trace[l] + 1e-10);
                    }
                    CHECK(result.final_objective() <= result.objective_trace.front());
                }
            }
        }
    }
    TEST_CASE("iteration states carry fresh objectives") {
        const auto data = random_tensor(3, 5, 4, 77);
        SolverConfig config;
        config.rank = 2;
        config.seed = 3;
        config.max_iterations = 50;
        int seen = 0;
        const FitResult result = fit(data, config, std::nullopt, [&](const IterationState& s) {
            ++seen;
            CHECK(s.iteration == seen);
            CHECK(s.max_abs_change >= 0.0);
            const double fresh = neg_log_likelihood(data, s.factors, config.epsilon);
            CHECK(std::abs(s.objective - fresh) <= 1e-12 * std::max(1.0, std::abs(fresh)));
        });
        CHECK(seen == result.iterations);
    }
    TEST_CASE("hitting the iteration cap is not an error") {
        const auto data = random_tensor(3, 5, 4, 78);
        SolverConfig config;
        config.rank = 2;
        config.max_iterations = 2;
        const FitResult result = fit(data, config);
        CHECK_FALSE(result.converged);
        CHECK(result.iterations == 2);
    }
    TEST_CASE("row mode keeps W rows summing to one") {
        const auto data = random_tensor(3, 5, 4, 79);
        SolverConfig config;
        config.rank = 2;
        config.normalization = Normalization::Row;
        config.max_iterations = 200;
        const FitResult result = fit(data, config);
        for (int m = 0; m < 3; ++m) {
            CHECK(std::abs(result.factors.w.row(m).sum() - 1.0) <= 1e-12);
        }
        CHECK((result.factors.w.array() >= 0.0).all());
        CHECK((result.factors.h.array() >= 0.0).all());
    }
    TEST_CASE("column mode output satisfies the exact normalization identities") {
        const auto data = random_tensor(4, 6, 4, 80);
        SolverConfig config;
        config.rank = 2;
        config.max_iterations = 500;
        const FitResult result = fit(data, config);
        for (int k = 0; k < 2; ++k) {
            CHECK(std::abs(result.factors.w.col(k).sum() - 1.0) <= 1e-12);
        }
        CHECK(std::abs(result.factors.h.sum() - 1.0) <= 1e-10);
        CHECK(std::abs(result.lambda.sum() - 1.0) <= 1e-10);
        // cached lambda equals W * H
        const Matrix recomputed = result.factors.w * result.factors.h;
        CHECK((result.lambda - recomputed).cwiseAbs().maxCoeff() == 0.0);
    }
    TEST_CASE("fit reaches at least the planted truth's likelihood") {
        const auto synthetic = generate_synthetic(3, 5, 2, 30, 4242);
        SolverConfig config;
        config.rank = 2;
        config.seed = 11;
        config.max_iterations = 20000;
        const auto multi = multi_restart_fit(synthetic.tensor, config, 5);
        const double truth_objective =
            neg_log_likelihood(synthetic.tensor, synthetic.truth, config.epsilon);
        CHECK(multi.best.final_objective() <= truth_objective + 1e-6);
    }
    TEST_CASE("frozen structures produce warnings") {
        const auto data = make_tensor(2, 3, {{0, 0, 1, 2}, {0, 1, 0, 1}});  // T2 empty, P3 idle
        SolverConfig config;
        config.rank = 2;
        config.normalization = Normalization::None;
        config.max_iterations = 60;
        const auto init = random_positive_factors(2, 3, 2, 55);
        const FitResult result = fit(data, config, init);
        REQUIRE(result.warnings.size() == 2);
        CHECK(result.warnings[0].find("T2") != std::string::npos);
        CHECK(result.warnings[1].find("P3") != std::string::npos);
        // Without normalization the frozen W row never moves.
        CHECK(result.factors.w.row(1) == init.w.row(1));
        CHECK(result.factors.h(0, 2) == 0.0);
        CHECK(result.factors.h(1, 2) == 0.0);
    }
    TEST_CASE("invalid configs are rejected") {
        const auto data = random_tensor(2, 3, 3, 81);
        SolverConfig config;
        config.rank = 0;
        CHECK_THROWS_AS(fit(data, config), std::invalid_argument);
        config.rank = 5;  // > min(M, N)
        CHECK_THROWS_AS(fit(data, config), std::invalid_argument);
        config.rank = 2;
        config.tolerance = 0.0;
        CHECK_THROWS_AS(fit(data, config), std::invalid_argument);
    }
    TEST_CASE("init with a zero entry is rejected") {
        const auto data = random_tensor(2, 3, 3, 82);
        SolverConfig config;
        config.rank = 2;
        auto init = random_positive_factors(2, 3, 2, 83);
        init.h(0, 0) = 0.0;
        CHECK_THROWS_AS(fit(data, config, init), std::invalid_argument);
    }
}

TEST_SUITE("multi_restart_fit") {
    TEST_CASE("one restart equals a plain fit") {
        const auto data = random_tensor(3, 4, 4, 91);
        SolverConfig config;
        config.rank = 2;
        config.seed = 17;
        config.max_iterations = 300;
        const auto multi = multi_restart_fit(data, config, 1);
        const auto single = fit(data, config);
        CHECK(multi.best.final_objective() == single.final_objective());
        CHECK((multi.best.factors.w - single.factors.w).cwiseAbs().maxCoeff() == 0.0);
        CHECK((multi.best.factors.h - single.factors.h).cwiseAbs().maxCoeff() == 0.0);
    }
    TEST_CASE("best objective is the minimum over restarts") {
        const auto data = random_tensor(3, 4, 4, 92);
        SolverConfig config;
        config.rank = 2;
        config.max_iterations = 300;
        const auto multi = multi_restart_fit(data, config, 6);
        for (double objective : multi.all_objectives) {
            CHECK(multi.best.final_objective() <= objective);
        }
        CHECK(multi.all_objectives[multi.best_index] == multi.best.final_objective());
    }
    TEST_CASE("deterministic regardless of thread count") {
        const auto data = random_tensor(3, 4, 4, 93);
        SolverConfig config;
        config.rank = 2;
        config.max_iterations = 200;
        const auto serial = multi_restart_fit(data, config, 5, 1);
        const auto threaded = multi_restart_fit(data, config, 5, 4);
        const auto repeat = multi_restart_fit(data, config, 5, 4);
        REQUIRE(serial.all_objectives.size() == threaded.all_objectives.size());
        for (std::size_t r = 0; r < serial.all_objectives.size(); ++r) {
            CHECK(serial.all_objectives[r] == threaded.all_objectives[r]);
            CHECK(repeat.all_objectives[r] == threaded.all_objectives[r]);
        }
        CHECK(serial.best_index == threaded.best_index);
    }
}
