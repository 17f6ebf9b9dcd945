#pragma once

// Test-side reference implementations: straight-line, loop-level, double
// precision, written directly from the defining formulas and kept independent
// of the library's tensor/op code paths.

#include <cstdint>
#include <functional>
#include <vector>

#include "paraformer/attention.hpp"
#include "paraformer/matcher.hpp"
#include "paraformer/wave_pe.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

Mat from_tensor(const paraformer::Tensor& t);
std::vector<double> vec_from_tensor(const paraformer::Tensor& t);
double max_abs_diff(const Mat& a, const paraformer::Tensor& t);

Mat matmul(const Mat& a, const Mat& b);
Mat softmax_rows(const Mat& a, double scale);

// y = x W + b with W taken column-major from a Linear's tensors.
Mat linear(const Mat& x, const paraformer::Linear& lin);
Mat relu(const Mat& x);
Mat mlp2(const Mat& x, const paraformer::Mlp2& mlp);

// Eq-level wave encoding: x0_j = d_j + MLP_F([A_j cos th_j, A_j sin th_j]).
Mat wave_encode(const Mat& d, const Mat& p_hat, const paraformer::WavePeParams& params);

// Single evaluation of softmax(q k^T / sqrt(d)) v for one head.
Mat attention(const Mat& q, const Mat& k, const Mat& v);

// Full parallel layer for heads = 1, no attention weight sharing.
struct ParallelOracleOut {
    Mat x;
    Mat y;
};
ParallelOracleOut parallel_layer_h1(const Mat& x, const Mat& y, const paraformer::AttnLayerParams& params);

// Serial self->cross pair for heads = 1.
ParallelOracleOut serial_pair_h1(const Mat& x, const Mat& y, const paraformer::SerialPairParams& params);

// Exp-domain Sinkhorn with dustbins and marginals (1..1, N), (1..1, M).
Mat sinkhorn_exp(const Mat& scores, double alpha, int iterations);

// Brute-force descending top-k with stable tie order.
std::vector<int64_t> top_k(const std::vector<double>& s, int64_t k);

// Brute-force mutual-max extraction over exp(log_p) without dustbins.
paraformer::MatchSet extract_matches(const Mat& p, double threshold);

// AUC by fine-grid integration of the fraction-correct curve over [0, 10] px.
double auc_grid(const std::vector<double>& errors, double limit = 10.0, int grid = 200000);

// double-precision elementwise helpers for reference losses
Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat mul(const Mat& a, const Mat& b);
Mat sigmoid(const Mat& a);
Mat map_sin(const Mat& a);
Mat map_cos(const Mat& a);
Mat add_rowvec(const Mat& a, const std::vector<double>& r);
Mat add_colvec(const Mat& a, const std::vector<double>& c);
Mat mul_colvec(const Mat& a, const std::vector<double>& c);
std::vector<double> lse_rows(const Mat& a);
std::vector<double> lse_cols(const Mat& a);
double sum_all(const Mat& a);

// Central finite differences of a scalar function against analytic gradients.
// Returns max of |a-n| / max(|a|,|n|,1). The analytic gradients come from the
// implementation's tape; the +-eps evaluations use ref_loss when given (a
// double-precision reference, which keeps the difference quotient noise far
// below the tolerances) and otherwise re-run the implementation.
double fd_check(const std::vector<paraformer::TensorPtr>& leaves,
                const std::function<paraformer::TensorPtr(paraformer::Tape*)>& loss, double eps = 1e-3,
                const std::function<double()>& ref_loss = nullptr);

}  // namespace oracle
