#pragma once

#include "btlnmf/types.hpp"

namespace btlnmf {

// P(i beats j) = skill_i / (skill_i + skill_j). Throws EvaluationError when
// both skills are zero.
double btl_win_prob(double skill_i, double skill_j);

// f_eps(W, H): the negative log-likelihood of the data with H replaced by
// H + eps inside the model. eps = 0 gives the plain BTL-NMF objective.
//
// Summation order is fixed (tournament-major, pairs sorted with i < j, the
// i->j term before the j->i term, terms with b = 0 skipped) so repeated
// evaluations are bit-identical.
double neg_log_likelihood(const ComparisonTensor& data, const FactorPair& factors,
                          double epsilon);

// W * H.
Matrix lambda_matrix(const FactorPair& factors);

// W * (H + eps). Shared by the objective, the MM updates and the gradients.
Matrix skill_matrix(const FactorPair& factors, double epsilon);

}  // namespace btlnmf
