#include "btlnmf/diagnostics.hpp"

#include <cmath>

#include "btlnmf/format.hpp"
#include "btlnmf/model.hpp"

namespace btlnmf {

GradientPair gradient(const ComparisonTensor& data, const FactorPair& factors,
                      double epsilon) {
    const int num_factors = factors.rank();
    const Matrix a = skill_matrix(factors, epsilon);
    GradientPair g;
    g.grad_w = Matrix::Zero(factors.num_tournaments(), num_factors);
    g.grad_h = Matrix::Zero(num_factors, factors.num_players());

    for (int m = 0; m < data.num_tournaments(); ++m) {
        for (const PairCounts& p : data.pairs(m)) {
            const double a_i = a(m, p.i);
            const double a_j = a(m, p.j);
            const double a_sum = a_i + a_j;
            if (p.wins_ij > 0 && a_i <= 0.0) {
                throw EvaluationError(format(
                    "gradient: zero skill sum [W(H+eps)] at (m=%d, i=%d)", m, p.i));
            }
            if (p.wins_ji > 0 && a_j <= 0.0) {
                throw EvaluationError(format(
                    "gradient: zero skill sum [W(H+eps)] at (m=%d, i=%d)", m, p.j));
            }
            if (a_sum <= 0.0) {
                throw EvaluationError(format("gradient: zero pair skill sum at (m=%d, i=%d, j=%d)",
                                             m, p.i, p.j));
            }
            const double b_ij = static_cast<double>(p.wins_ij);
            const double b_ji = static_cast<double>(p.wins_ji);
            const double b_sum = b_ij + b_ji;
            for (int k = 0; k < num_factors; ++k) {
                const double w_mk = factors.w(m, k);
                const double h_ki = factors.h(k, p.i) + epsilon;
                const double h_kj = factors.h(k, p.j) + epsilon;
                double gw = b_sum * (h_ki + h_kj) / a_sum;
                if (p.wins_ij > 0) gw -= b_ij * h_ki / a_i;
                if (p.wins_ji > 0) gw -= b_ji * h_kj / a_j;
                g.grad_w(m, k) += gw;
                if (p.wins_ij > 0) g.grad_h(k, p.i) -= b_ij * w_mk / a_i;
                if (p.wins_ji > 0) g.grad_h(k, p.j) -= b_ji * w_mk / a_j;
                g.grad_h(k, p.i) += b_sum * w_mk / a_sum;
                g.grad_h(k, p.j) += b_sum * w_mk / a_sum;
            }
        }
    }
    if (!g.grad_w.allFinite() || !g.grad_h.allFinite()) {
        throw EvaluationError("gradient: non-finite entries in the result");
    }
    return g;
}

StationarityReport stationarity_residual(const ComparisonTensor& data,
                                         const FactorPair& factors, double epsilon,
                                         double positivity_threshold) {
    const GradientPair g = gradient(data, factors, epsilon);
    StationarityReport report;
    report.objective = neg_log_likelihood(data, factors, epsilon);

    auto scan = [&](const Matrix& values, const Matrix& grads, char tag) {
        for (Eigen::Index r = 0; r < values.rows(); ++r) {
            for (Eigen::Index c = 0; c < values.cols(); ++c) {
                const double grad = grads(r, c);
                double violation;
                if (values(r, c) > positivity_threshold) {
                    violation = std::abs(grad);
                    report.interior_max_abs_grad =
                        std::max(report.interior_max_abs_grad, violation);
                } else {
                    violation = std::max(-grad, 0.0);
                    report.boundary_max_neg_grad =
                        std::max(report.boundary_max_neg_grad, violation);
                }
                if (violation > report.residual) {
                    report.residual = violation;
                    report.worst_coordinate =
                        Coordinate{tag, static_cast<int>(r), static_cast<int>(c)};
                }
            }
        }
    };
    scan(factors.w, g.grad_w, 'W');
    scan(factors.h, g.grad_h, 'H');
    return report;
}

double finite_difference_check(const ComparisonTensor& data, const FactorPair& factors,
                               double epsilon, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
    const GradientPair analytic = gradient(data, factors, epsilon);
    double max_error = 0.0;

    auto probe = [&](bool is_w, Eigen::Index r, Eigen::Index c, double analytic_grad) {
        FactorPair perturbed = factors;
        Matrix& target = is_w ? perturbed.w : perturbed.h;
        const double base = target(r, c);
        if (base <= 10.0 * step) return;  // keep both evaluation points feasible
        target(r, c) = base + step;
        const double f_plus = neg_log_likelihood(data, perturbed, epsilon);
        target(r, c) = base - step;
        const double f_minus = neg_log_likelihood(data, perturbed, epsilon);
        const double fd = (f_plus - f_minus) / (2.0 * step);
        const double scale = std::max({1.0, std::abs(analytic_grad), std::abs(fd)});
        max_error = std::max(max_error, std::abs(analytic_grad - fd) / scale);
    };

    for (Eigen::Index m = 0; m < factors.w.rows(); ++m)
        for (Eigen::Index k = 0; k < factors.w.cols(); ++k)
            probe(true, m, k, analytic.grad_w(m, k));
    for (Eigen::Index k = 0; k < factors.h.rows(); ++k)
        for (Eigen::Index i = 0; i < factors.h.cols(); ++i)
            probe(false, k, i, analytic.grad_h(k, i));
    return max_error;
}

}  // namespace btlnmf
