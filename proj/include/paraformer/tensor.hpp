#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "paraformer/errors.hpp"
#include "paraformer/rng.hpp"

namespace paraformer {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major float32 tensor (1-D vectors and 2-D matrices). Gradients
// are allocated lazily and share the tensor's shape. Matmul and reduction
// kernels accumulate in float64; every op validates that its output is
// finite, so a NaN/Inf surfaces as a NumericError at the op that produced it.
class Tensor {
public:
    std::vector<int64_t> shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;

    static TensorPtr create(std::vector<int64_t> shape, bool requires_grad = false);
    static TensorPtr zeros(int64_t rows, int64_t cols, bool requires_grad = false);
    static TensorPtr vector(int64_t n, bool requires_grad = false);
    static TensorPtr full(int64_t rows, int64_t cols, float value);
    static TensorPtr scalar(float value, bool requires_grad = false);
    static TensorPtr from_rows(const std::vector<std::vector<float>>& rows, bool requires_grad = false);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
    int64_t cols() const { return shape.empty() ? 0 : shape.back(); }
    bool is_scalar() const { return numel() == 1; }

    float& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
    float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }
    float item() const;

    void ensure_grad();
    void zero_grad() { grad.assign(grad.size(), 0.0f); }
    bool all_finite() const;
    std::string shape_str() const;
};

// Records the backward closures of one forward pass in topological order.
// Single-threaded; independent tapes may run concurrently.
class Tape {
public:
    void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

    // Seeds root->grad with 1 and runs all closures in reverse order. The
    // root must be scalar, and a tape can only be walked once.
    void backward(const TensorPtr& root);

    size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }
    void reset() {
        nodes_.clear();
        consumed_ = false;
    }

private:
    std::vector<std::function<void()>> nodes_;
    bool consumed_ = false;
};

// ---- ops -------------------------------------------------------------
// All ops run eagerly: with a non-null tape they record backward closures
// whenever an input participates in differentiation; with tape == nullptr
// they are plain inference-mode functions.

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
// a [m x k] times b^T where b is [n x k]; used for Q K^T logits.
TensorPtr matmul_nt(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(Tape* tape, const TensorPtr& a);

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape* tape, const TensorPtr& a, float s);
// Broadcasts are explicit: row vector [n] or [1 x n], column vector [m x 1].
TensorPtr add_rowvec(Tape* tape, const TensorPtr& a, const TensorPtr& row);
TensorPtr add_colvec(Tape* tape, const TensorPtr& a, const TensorPtr& col);
TensorPtr mul_colvec(Tape* tape, const TensorPtr& a, const TensorPtr& col);

TensorPtr relu(Tape* tape, const TensorPtr& a);
TensorPtr sigmoid(Tape* tape, const TensorPtr& a);
TensorPtr sin_op(Tape* tape, const TensorPtr& a);
TensorPtr cos_op(Tape* tape, const TensorPtr& a);
TensorPtr exp_op(Tape* tape, const TensorPtr& a);

// Rows of softmax(scale * a); stabilized by per-row max subtraction.
TensorPtr softmax_rows(Tape* tape, const TensorPtr& a, float scale);
TensorPtr logsumexp_rows(Tape* tape, const TensorPtr& a);  // [m x 1]
TensorPtr logsumexp_cols(Tape* tape, const TensorPtr& a);  // [1 x n]

TensorPtr concat_cols(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr concat_rows(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr slice_cols(Tape* tape, const TensorPtr& a, int64_t start, int64_t len);
TensorPtr slice_rows(Tape* tape, const TensorPtr& a, int64_t start, int64_t len);

// Index selection. Indices are constants: gradients flow through the
// gathered/scattered values only.
TensorPtr gather_rows(Tape* tape, const TensorPtr& a, const std::vector<int64_t>& idx);
TensorPtr scatter_rows(Tape* tape, const TensorPtr& a, const std::vector<int64_t>& idx, int64_t n_total);

// dim = 0 sums over rows giving [1 x n]; dim = 1 sums over columns giving [m x 1].
TensorPtr reduce_sum(Tape* tape, const TensorPtr& a, int dim);
TensorPtr reduce_sum_all(Tape* tape, const TensorPtr& a);  // [1 x 1]
TensorPtr expand_scalar(Tape* tape, const TensorPtr& a, int64_t rows, int64_t cols);
// w / ||w||_2 for a vector-shaped tensor.
TensorPtr normalize_vec(Tape* tape, const TensorPtr& w);

// Runs Tape::backward (scalar-root and single-walk contract checks included).
void backward(Tape& tape, const TensorPtr& root);

// Digest of the discrete decisions (relu signs, top-k selections) made during
// a forward pass. Finite-difference probes compare digests of the +eps and
// -eps evaluations and skip parameters whose perturbation crossed a kink,
// where the loss is genuinely non-differentiable.
namespace kink {
void set_recorder(uint64_t* digest_or_null);
bool active();
void note(uint64_t v);
}  // namespace kink

// ---- raw kernels (shared by ops and by the analytic flops model tests) ----
namespace kernel {
// c = a[m x k] * b[k x n], (optionally accumulating into c)
void mm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool accumulate);
// c = a[m x k] * b[n x k]^T
void mm_nt(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool accumulate);
// c = a[m x k]^T * g[m x n]  -> [k x n]
void mm_tn(const float* a, const float* g, float* c, int64_t m, int64_t k, int64_t n, bool accumulate);
}  // namespace kernel

}  // namespace paraformer
