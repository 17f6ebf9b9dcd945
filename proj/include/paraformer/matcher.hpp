#pragma once

#include <cstdint>
#include <vector>

#include "paraformer/tensor.hpp"

namespace paraformer {

// Soft assignment between M and N keypoints with a dustbin row/column.
// exp(log_p) rows 0..M-1 and columns 0..N-1 sum to 1 after convergence; the
// dustbin row and column carry marginals N and M.
struct Assignment {
    TensorPtr log_p;  // [(M+1) x (N+1)]
    int iterations_run = 0;

    int64_t rows() const { return log_p->shape[0] - 1; }
    int64_t cols() const { return log_p->shape[1] - 1; }
};

struct Match {
    int64_t i = 0;
    int64_t j = 0;
    float confidence = 0.0f;
};

using MatchSet = std::vector<Match>;

// S_ij = <x_i, y_j> / sqrt(C)
TensorPtr score_matrix(Tape* tape, const TensorPtr& x_out, const TensorPtr& y_out);

// Log-domain Sinkhorn over the dustbin-augmented score matrix with marginals
// (1,...,1,N) and (1,...,1,M). alpha is the learnable dustbin score.
Assignment sinkhorn(Tape* tape, const TensorPtr& scores, const TensorPtr& alpha, int iterations);

// Mutual-max matches with confidence exp(log_p) >= threshold.
MatchSet extract_matches(const Assignment& assignment, float threshold);

// Ground-truth labels for one pair: matched index pairs plus the unmatched
// partitions of both images.
struct GtLabels {
    std::vector<std::pair<int64_t, int64_t>> matches;
    std::vector<int64_t> unmatched_x;
    std::vector<int64_t> unmatched_y;

    size_t term_count() const { return matches.size() + unmatched_x.size() + unmatched_y.size(); }
};

// Mean negative log-likelihood over gt matches and both dustbin assignments.
TensorPtr matching_loss(Tape* tape, const Assignment& assignment, const GtLabels& gt);

}  // namespace paraformer
