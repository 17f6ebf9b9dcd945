#include "paraformer/matcher.hpp"

#include <cmath>

namespace paraformer {

TensorPtr score_matrix(Tape* tape, const TensorPtr& x_out, const TensorPtr& y_out) {
    if (x_out->shape.size() != 2 || y_out->shape.size() != 2 || x_out->shape[1] != y_out->shape[1])
        throw DimensionError("score_matrix: " + x_out->shape_str() + " vs " + y_out->shape_str());
    const float inv_sqrt_c = 1.0f / std::sqrt(static_cast<float>(x_out->shape[1]));
    return scale(tape, matmul_nt(tape, x_out, y_out), inv_sqrt_c);
}

Assignment sinkhorn(Tape* tape, const TensorPtr& scores, const TensorPtr& alpha, int iterations) {
    if (iterations < 1) throw ContractError("sinkhorn: iterations must be >= 1");
    if (!scores->all_finite()) throw ContractError("sinkhorn: non-finite scores");
    if (!alpha->is_scalar()) throw DimensionError("sinkhorn: alpha must be scalar");
    const int64_t m = scores->shape[0], n = scores->shape[1];

    // augment with the dustbin row and column, all filled with alpha
    auto top = concat_cols(tape, scores, expand_scalar(tape, alpha, m, 1));
    auto bottom = concat_cols(tape, expand_scalar(tape, alpha, 1, n), expand_scalar(tape, alpha, 1, 1));
    auto z = concat_rows(tape, top, bottom);  // [(m+1) x (n+1)]

    // marginals: each real point carries mass 1, each dustbin the opposite count
    auto log_mu = Tensor::zeros(m + 1, 1);
    log_mu->data[static_cast<size_t>(m)] = std::log(static_cast<float>(n));
    auto log_nu = Tensor::zeros(1, n + 1);
    log_nu->data[static_cast<size_t>(n)] = std::log(static_cast<float>(m));

    auto u = Tensor::zeros(m + 1, 1);
    auto v = Tensor::zeros(1, n + 1);
    for (int t = 0; t < iterations; ++t) {
        u = sub(tape, log_mu, logsumexp_rows(tape, add_rowvec(tape, z, v)));
        v = sub(tape, log_nu, logsumexp_cols(tape, add_colvec(tape, z, u)));
    }

    Assignment out;
    out.log_p = add_rowvec(tape, add_colvec(tape, z, u), v);
    out.iterations_run = iterations;
    return out;
}

MatchSet extract_matches(const Assignment& assignment, float threshold) {
    const int64_t m = assignment.rows(), n = assignment.cols();
    const auto& lp = *assignment.log_p;
    // row/column argmax over the non-dustbin block
    std::vector<int64_t> best_j(static_cast<size_t>(m), -1);
    std::vector<int64_t> best_i(static_cast<size_t>(n), -1);
    for (int64_t i = 0; i < m; ++i) {
        float best = -INFINITY;
        for (int64_t j = 0; j < n; ++j) {
            const float v = lp.at(i, j);
            if (v > best) {
                best = v;
                best_j[static_cast<size_t>(i)] = j;
            }
        }
    }
    for (int64_t j = 0; j < n; ++j) {
        float best = -INFINITY;
        for (int64_t i = 0; i < m; ++i) {
            const float v = lp.at(i, j);
            if (v > best) {
                best = v;
                best_i[static_cast<size_t>(j)] = i;
            }
        }
    }
    MatchSet matches;
    for (int64_t i = 0; i < m; ++i) {
        const int64_t j = best_j[static_cast<size_t>(i)];
        if (j < 0 || best_i[static_cast<size_t>(j)] != i) continue;
        const float conf = std::exp(lp.at(i, j));
        if (conf >= threshold) matches.push_back({i, j, conf});
    }
    return matches;
}

TensorPtr matching_loss(Tape* tape, const Assignment& assignment, const GtLabels& gt) {
    if (gt.term_count() == 0) throw ContractError("matching_loss: empty ground truth");
    const int64_t m = assignment.rows(), n = assignment.cols();
    auto mask = Tensor::zeros(m + 1, n + 1);
    for (const auto& [i, j] : gt.matches) {
        if (i < 0 || i >= m || j < 0 || j >= n) throw IndexError("matching_loss: gt match out of range");
        mask->at(i, j) = 1.0f;
    }
    for (int64_t i : gt.unmatched_x) {
        if (i < 0 || i >= m) throw IndexError("matching_loss: unmatched_x out of range");
        mask->at(i, n) = 1.0f;
    }
    for (int64_t j : gt.unmatched_y) {
        if (j < 0 || j >= n) throw IndexError("matching_loss: unmatched_y out of range");
        mask->at(m, j) = 1.0f;
    }
    const float inv_count = -1.0f / static_cast<float>(gt.term_count());
    return scale(tape, reduce_sum_all(tape, mul(tape, assignment.log_p, mask)), inv_count);
}

}  // namespace paraformer
