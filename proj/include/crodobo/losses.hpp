#pragma once

#include <cstddef>
#include <vector>

#include "crodobo/matrix.hpp"

namespace crodobo {

// Scalar loss plus its gradient with respect to the probability matrix that
// produced it. Feed prob_grad to backward() to reach the parameters.
struct LossValue {
    real value = 0;
    Matrix prob_grad;
};

// Mean cross-entropy against integer labels: -(1/B) sum_b log p[b, y_b].
LossValue cross_entropy_loss(const Matrix& probs, const std::vector<int>& labels);

struct PseudoLabels {
    std::vector<int> labels;  // per-row argmax, lowest index wins ties
    std::vector<bool> mask;   // true iff the row's max probability >= tau
    std::size_t accepted = 0;
};

PseudoLabels pseudo_labels(const Matrix& probs, real tau);

// Masked cross-entropy with the *full* batch size as denominator:
// (1/B) sum_b mask_b * -log p[b, y_b]. Rows with mask false contribute
// nothing, so an all-false mask gives loss 0 and a zero gradient.
LossValue masked_cross_entropy(const Matrix& probs, const std::vector<int>& labels,
                               const std::vector<bool>& mask);

// Mean per-sample Shannon entropy: (1/B) sum_b sum_c -p log p, with
// 0*log(0) = 0. Minimizing drives predictions confident.
LossValue entropy_loss(const Matrix& probs);

// Negative entropy of the batch-mean prediction: sum_c pbar_c log pbar_c.
// Minimizing drives the batch marginal toward uniform.
LossValue diversity_loss(const Matrix& probs);

}  // namespace crodobo
