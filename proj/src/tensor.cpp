#include "paraformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace paraformer {

namespace {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw DimensionError("negative dimension");
        n *= d;
    }
    return n;
}

void check_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
}

void require_2d(const TensorPtr& t, const char* op) {
    if (t->shape.size() != 2) throw DimensionError(std::string(op) + ": expected 2-D tensor, got " + t->shape_str());
}

bool tracked(Tape* tape, const TensorPtr& t) { return tape != nullptr && t->requires_grad; }

// Marks the output differentiable and registers the closure if any input is tracked.
void record(Tape* tape, const TensorPtr& out, bool any_tracked, std::function<void()> fn) {
    if (tape == nullptr || !any_tracked) return;
    out->requires_grad = true;
    tape->record(std::move(fn));
}

// Backward closures bail out when no gradient ever reached their output.
bool no_grad(const TensorPtr& out) { return out->grad.empty(); }

}  // namespace

TensorPtr Tensor::create(std::vector<int64_t> shape, bool requires_grad) {
    if (shape.empty() || shape.size() > 2) throw DimensionError("tensors are 1-D or 2-D");
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data.assign(static_cast<size_t>(shape_numel(t->shape)), 0.0f);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::zeros(int64_t rows, int64_t cols, bool requires_grad) {
    return create({rows, cols}, requires_grad);
}

TensorPtr Tensor::vector(int64_t n, bool requires_grad) { return create({n}, requires_grad); }

TensorPtr Tensor::full(int64_t rows, int64_t cols, float value) {
    auto t = zeros(rows, cols);
    std::fill(t->data.begin(), t->data.end(), value);
    return t;
}

TensorPtr Tensor::scalar(float value, bool requires_grad) {
    auto t = zeros(1, 1, requires_grad);
    t->data[0] = value;
    return t;
}

TensorPtr Tensor::from_rows(const std::vector<std::vector<float>>& rows, bool requires_grad) {
    if (rows.empty()) throw DimensionError("from_rows: no rows");
    const int64_t n = static_cast<int64_t>(rows[0].size());
    auto t = zeros(static_cast<int64_t>(rows.size()), n, requires_grad);
    for (size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<int64_t>(rows[i].size()) != n) throw DimensionError("from_rows: ragged rows");
        std::copy(rows[i].begin(), rows[i].end(), t->data.begin() + static_cast<int64_t>(i) * n);
    }
    return t;
}

float Tensor::item() const {
    if (!is_scalar()) throw ContractError("item() on non-scalar tensor " + shape_str());
    return data[0];
}

void Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
}

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? " x " : "") << shape[i];
    os << "]";
    return os.str();
}

namespace kink {

namespace {
thread_local uint64_t* g_digest = nullptr;
}

void set_recorder(uint64_t* digest_or_null) { g_digest = digest_or_null; }
bool active() { return g_digest != nullptr; }
void note(uint64_t v) {
    if (g_digest != nullptr) *g_digest = (*g_digest ^ v) * 0x100000001b3ull;
}

}  // namespace kink

void Tape::backward(const TensorPtr& root) {
    if (consumed_) throw ContractError("backward called twice on the same tape");
    if (!root->is_scalar()) throw ContractError("backward root must be scalar, got " + root->shape_str());
    consumed_ = true;
    root->ensure_grad();
    root->grad[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void backward(Tape& tape, const TensorPtr& root) { tape.backward(root); }

// ---- kernels ---------------------------------------------------------

namespace kernel {

void mm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    std::vector<double> acc(static_cast<size_t>(n));
    for (int64_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const float* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) acc[static_cast<size_t>(j)] += av * static_cast<double>(brow[j]);
        }
        float* crow = c + i * n;
        if (accumulate) {
            for (int64_t j = 0; j < n; ++j) crow[j] += static_cast<float>(acc[static_cast<size_t>(j)]);
        } else {
            for (int64_t j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[static_cast<size_t>(j)]);
        }
    }
}

void mm_nt(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    // b arrives [n x k]; transposing it first lets the contraction run as the
    // cache- and vector-friendly nn kernel
    std::vector<float> bt(static_cast<size_t>(k * n));
    for (int64_t j = 0; j < n; ++j)
        for (int64_t p = 0; p < k; ++p) bt[static_cast<size_t>(p * n + j)] = b[j * k + p];
    mm_nn(a, bt.data(), c, m, k, n, accumulate);
}

void mm_tn(const float* a, const float* g, float* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    std::vector<float> at(static_cast<size_t>(m * k));
    for (int64_t p = 0; p < m; ++p)
        for (int64_t i = 0; i < k; ++i) at[static_cast<size_t>(i * m + p)] = a[p * k + i];
    mm_nn(at.data(), g, c, k, m, n, accumulate);
}

}  // namespace kernel

// ---- matmul family ----------------------------------------------------

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a->shape[1] != b->shape[0])
        throw DimensionError("matmul: " + a->shape_str() + " * " + b->shape_str());
    const int64_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = Tensor::zeros(m, n);
    kernel::mm_nn(a->data.data(), b->data.data(), out->data.data(), m, k, n, false);
    check_finite(*out, "matmul");

    const bool ta = tracked(tape, a), tb = tracked(tape, b);
    record(tape, out, ta || tb, [a, b, out, m, k, n, ta, tb] {
        if (no_grad(out)) return;
        if (ta) {
            a->ensure_grad();
            kernel::mm_nt(out->grad.data(), b->data.data(), a->grad.data(), m, n, k, true);
        }
        if (tb) {
            b->ensure_grad();
            kernel::mm_tn(a->data.data(), out->grad.data(), b->grad.data(), m, k, n, true);
        }
    });
    return out;
}

TensorPtr matmul_nt(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    if (a->shape[1] != b->shape[1])
        throw DimensionError("matmul_nt: " + a->shape_str() + " * " + b->shape_str() + "^T");
    const int64_t m = a->shape[0], k = a->shape[1], n = b->shape[0];
    auto out = Tensor::zeros(m, n);
    kernel::mm_nt(a->data.data(), b->data.data(), out->data.data(), m, k, n, false);
    check_finite(*out, "matmul_nt");

    const bool ta = tracked(tape, a), tb = tracked(tape, b);
    record(tape, out, ta || tb, [a, b, out, m, k, n, ta, tb] {
        if (no_grad(out)) return;
        if (ta) {
            // dA = G * B  with G [m x n], B [n x k]
            a->ensure_grad();
            kernel::mm_nn(out->grad.data(), b->data.data(), a->grad.data(), m, n, k, true);
        }
        if (tb) {
            // dB = G^T * A with G [m x n], A [m x k]
            b->ensure_grad();
            kernel::mm_tn(out->grad.data(), a->data.data(), b->grad.data(), m, n, k, true);
        }
    });
    return out;
}

TensorPtr transpose(Tape* tape, const TensorPtr& a) {
    require_2d(a, "transpose");
    const int64_t m = a->shape[0], n = a->shape[1];
    auto out = Tensor::zeros(n, m);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out->data[static_cast<size_t>(j * m + i)] = a->data[static_cast<size_t>(i * n + j)];

    record(tape, out, tracked(tape, a), [a, out, m, n] {
        if (no_grad(out)) return;
        a->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
                a->grad[static_cast<size_t>(i * n + j)] += out->grad[static_cast<size_t>(j * m + i)];
    });
    return out;
}

// ---- elementwise -------------------------------------------------------

namespace {

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape)
        throw DimensionError(std::string(op) + ": " + a->shape_str() + " vs " + b->shape_str());
}

}  // namespace

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "add");
    auto out = Tensor::create(a->shape);
    for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
    check_finite(*out, "add");
    const bool ta = tracked(tape, a), tb = tracked(tape, b);
    record(tape, out, ta || tb, [a, b, out, ta, tb] {
        if (no_grad(out)) return;
        if (ta) {
            a->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
        }
        if (tb) {
            b->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i];
        }
    });
    return out;
}

TensorPtr sub(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "sub");
    auto out = Tensor::create(a->shape);
    for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] - b->data[i];
    check_finite(*out, "sub");
    const bool ta = tracked(tape, a), tb = tracked(tape, b);
    record(tape, out, ta || tb, [a, b, out, ta, tb] {
        if (no_grad(out)) return;
        if (ta) {
            a->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
        }
        if (tb) {
            b->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) b->grad[i] -= out->grad[i];
        }
    });
    return out;
}

TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "mul");
    auto out = Tensor::create(a->shape);
    for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
    check_finite(*out, "mul");
    const bool ta = tracked(tape, a), tb = tracked(tape, b);
    record(tape, out, ta || tb, [a, b, out, ta, tb] {
        if (no_grad(out)) return;
        if (ta) {
            a->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
        }
        if (tb) {
            b->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
        }
    });
    return out;
}

TensorPtr scale(Tape* tape, const TensorPtr& a, float s) {
    auto out = Tensor::create(a->shape);
    for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * s;
    check_finite(*out, "scale");
    record(tape, out, tracked(tape, a), [a, out, s] {
        if (no_grad(out)) return;
        a->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * s;
    });
    return out;
}

namespace {

// Accepts [n] or [1 x n] as a row vector of width n.
const TensorPtr& require_rowvec(const TensorPtr& v, int64_t n, const char* op) {
    const bool ok = (v->shape.size() == 1 && v->shape[0] == n) ||
                    (v->shape.size() == 2 && v->shape[0] == 1 && v->shape[1] == n);
    if (!ok) throw DimensionError(std::string(op) + ": row vector of width " + std::to_string(n) + " expected, got " + v->shape_str());
    return v;
}

const TensorPtr& require_colvec(const TensorPtr& v, int64_t m, const char* op) {
    const bool ok = (v->shape.size() == 2 && v->shape[0] == m && v->shape[1] == 1);
    if (!ok) throw DimensionError(std::string(op) + ": column vector of height " + std::to_string(m) + " expected, got " + v->shape_str());
    return v;
}

}  // namespace

TensorPtr add_rowvec(Tape* tape, const TensorPtr& a, const TensorPtr& row) {
    require_2d(a, "add_rowvec");
    const int64_t m = a->shape[0], n = a->shape[1];
    require_rowvec(row, n, "add_rowvec");
    auto out = Tensor::zeros(m, n);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
            out->data[static_cast<size_t>(i * n + j)] = a->data[static_cast<size_t>(i * n + j)] + row->data[static_cast<size_t>(j)];
    check_finite(*out, "add_rowvec");
    const bool ta = tracked(tape, a), tr = tracked(tape, row);
    record(tape, out, ta || tr, [a, row, out, m, n, ta, tr] {
        if (no_grad(out)) return;
        if (ta) {
            a->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
        }
        if (tr) {
            row->ensure_grad();
            for (int64_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (int64_t i = 0; i < m; ++i) s += out->grad[static_cast<size_t>(i * n + j)];
                row->grad[static_cast<size_t>(j)] += static_cast<float>(s);
            }
        }
    });
    return out;
}

TensorPtr add_colvec(Tape* tape, const TensorPtr& a, const TensorPtr& col) {
    require_2d(a, "add_colvec");
    const int64_t m = a->shape[0], n = a->shape[1];
    require_colvec(col, m, "add_colvec");
    auto out = Tensor::zeros(m, n);
    for (int64_t i = 0; i < m; ++i) {
        const float c = col->data[static_cast<size_t>(i)];
        for (int64_t j = 0; j < n; ++j)
            out->data[static_cast<size_t>(i * n + j)] = a->data[static_cast<size_t>(i * n + j)] + c;
    }
    check_finite(*out, "add_colvec");
    const bool ta = tracked(tape, a), tc = tracked(tape, col);
    record(tape, out, ta || tc, [a, col, out, m, n, ta, tc] {
        if (no_grad(out)) return;
        if (ta) {
            a->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
        }
        if (tc) {
            col->ensure_grad();
            for (int64_t i = 0; i < m; ++i) {
                double s = 0.0;
                for (int64_t j = 0; j < n; ++j) s += out->grad[static_cast<size_t>(i * n + j)];
                col->grad[static_cast<size_t>(i)] += static_cast<float>(s);
            }
        }
    });
    return out;
}

TensorPtr mul_colvec(Tape* tape, const TensorPtr& a, const TensorPtr& col) {
    require_2d(a, "mul_colvec");
    const int64_t m = a->shape[0], n = a->shape[1];
    require_colvec(col, m, "mul_colvec");
    auto out = Tensor::zeros(m, n);
    for (int64_t i = 0; i < m; ++i) {
        const float c = col->data[static_cast<size_t>(i)];
        for (int64_t j = 0; j < n; ++j)
            out->data[static_cast<size_t>(i * n + j)] = a->data[static_cast<size_t>(i * n + j)] * c;
    }
    check_finite(*out, "mul_colvec");
    const bool ta = tracked(tape, a), tc = tracked(tape, col);
    record(tape, out, ta || tc, [a, col, out, m, n, ta, tc] {
        if (no_grad(out)) return;
        if (ta) {
            a->ensure_grad();
            for (int64_t i = 0; i < m; ++i) {
                const float c = col->data[static_cast<size_t>(i)];
                for (int64_t j = 0; j < n; ++j)
                    a->grad[static_cast<size_t>(i * n + j)] += out->grad[static_cast<size_t>(i * n + j)] * c;
            }
        }
        if (tc) {
            col->ensure_grad();
            for (int64_t i = 0; i < m; ++i) {
                double s = 0.0;
                for (int64_t j = 0; j < n; ++j)
                    s += static_cast<double>(out->grad[static_cast<size_t>(i * n + j)]) * a->data[static_cast<size_t>(i * n + j)];
                col->grad[static_cast<size_t>(i)] += static_cast<float>(s);
            }
        }
    });
    return out;
}

namespace {

template <typename Fwd, typename Bwd>
TensorPtr unary_op(Tape* tape, const TensorPtr& a, const char* name, Fwd fwd, Bwd dydx) {
    auto out = Tensor::create(a->shape);
    for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = fwd(a->data[i]);
    check_finite(*out, name);
    record(tape, out, tracked(tape, a), [a, out, dydx] {
        if (no_grad(out)) return;
        a->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * dydx(a->data[i], out->data[i]);
    });
    return out;
}

}  // namespace

TensorPtr relu(Tape* tape, const TensorPtr& a) {
    if (kink::active())
        for (size_t i = 0; i < a->data.size(); ++i)
            if (a->data[i] > 0.0f) kink::note(i);
    return unary_op(
        tape, a, "relu", [](float x) { return x > 0.0f ? x : 0.0f; },
        [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

TensorPtr sigmoid(Tape* tape, const TensorPtr& a) {
    return unary_op(
        tape, a, "sigmoid",
        [](float x) {
            // split on sign to avoid exp overflow
            return x >= 0.0f ? 1.0f / (1.0f + ::expf(-x)) : ::expf(x) / (1.0f + ::expf(x));
        },
        [](float, float y) { return y * (1.0f - y); });
}

TensorPtr sin_op(Tape* tape, const TensorPtr& a) {
    return unary_op(
        tape, a, "sin", [](float x) { return std::sin(x); }, [](float x, float) { return std::cos(x); });
}

TensorPtr cos_op(Tape* tape, const TensorPtr& a) {
    return unary_op(
        tape, a, "cos", [](float x) { return std::cos(x); }, [](float x, float) { return -std::sin(x); });
}

TensorPtr exp_op(Tape* tape, const TensorPtr& a) {
    return unary_op(
        tape, a, "exp", [](float x) { return std::exp(x); }, [](float, float y) { return y; });
}

// ---- softmax / logsumexp ------------------------------------------------

TensorPtr softmax_rows(Tape* tape, const TensorPtr& a, float s) {
    require_2d(a, "softmax_rows");
    const int64_t m = a->shape[0], n = a->shape[1];
    if (n == 0) throw DimensionError("softmax_rows: empty rows");
    auto out = Tensor::zeros(m, n);
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a->data.data() + i * n;
        float* orow = out->data.data() + i * n;
        double mx = -INFINITY;
        for (int64_t j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(arow[j]) * s);
        double denom = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            const double e = static_cast<double>(::expf(static_cast<float>(static_cast<double>(arow[j]) * s - mx)));
            orow[j] = static_cast<float>(e);
            denom += e;
        }
        const double inv = 1.0 / denom;
        for (int64_t j = 0; j < n; ++j) orow[j] = static_cast<float>(orow[j] * inv);
    }
    check_finite(*out, "softmax_rows");
    record(tape, out, tracked(tape, a), [a, out, m, n, s] {
        if (no_grad(out)) return;
        a->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
            const float* yrow = out->data.data() + i * n;
            const float* grow = out->grad.data() + i * n;
            double dot = 0.0;
            for (int64_t j = 0; j < n; ++j) dot += static_cast<double>(grow[j]) * yrow[j];
            float* arow = a->grad.data() + i * n;
            for (int64_t j = 0; j < n; ++j)
                arow[j] += static_cast<float>(s * yrow[j] * (static_cast<double>(grow[j]) - dot));
        }
    });
    return out;
}

TensorPtr logsumexp_rows(Tape* tape, const TensorPtr& a) {
    require_2d(a, "logsumexp_rows");
    const int64_t m = a->shape[0], n = a->shape[1];
    auto out = Tensor::zeros(m, 1);
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a->data.data() + i * n;
        double mx = -INFINITY;
        for (int64_t j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(arow[j]));
        double s = 0.0;
        for (int64_t j = 0; j < n; ++j) s += static_cast<double>(::expf(static_cast<float>(static_cast<double>(arow[j]) - mx)));
        out->data[static_cast<size_t>(i)] = static_cast<float>(mx + std::log(s));
    }
    check_finite(*out, "logsumexp_rows");
    record(tape, out, tracked(tape, a), [a, out, m, n] {
        if (no_grad(out)) return;
        a->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
            const float g = out->grad[static_cast<size_t>(i)];
            if (g == 0.0f) continue;
            const float lse = out->data[static_cast<size_t>(i)];
            const float* arow = a->data.data() + i * n;
            float* grow = a->grad.data() + i * n;
            for (int64_t j = 0; j < n; ++j) grow[j] += g * ::expf(arow[j] - lse);
        }
    });
    return out;
}

TensorPtr logsumexp_cols(Tape* tape, const TensorPtr& a) {
    require_2d(a, "logsumexp_cols");
    const int64_t m = a->shape[0], n = a->shape[1];
    auto out = Tensor::zeros(1, n);
    std::vector<double> mx(static_cast<size_t>(n), -INFINITY);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
            mx[static_cast<size_t>(j)] = std::max(mx[static_cast<size_t>(j)], static_cast<double>(a->data[static_cast<size_t>(i * n + j)]));
    std::vector<double> sum(static_cast<size_t>(n), 0.0);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
            sum[static_cast<size_t>(j)] += static_cast<double>(
                ::expf(static_cast<float>(static_cast<double>(a->data[static_cast<size_t>(i * n + j)]) - mx[static_cast<size_t>(j)])));
    for (int64_t j = 0; j < n; ++j)
        out->data[static_cast<size_t>(j)] = static_cast<float>(mx[static_cast<size_t>(j)] + std::log(sum[static_cast<size_t>(j)]));
    check_finite(*out, "logsumexp_cols");
    record(tape, out, tracked(tape, a), [a, out, m, n] {
        if (no_grad(out)) return;
        a->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
                const float g = out->grad[static_cast<size_t>(j)];
                if (g == 0.0f) continue;
                a->grad[static_cast<size_t>(i * n + j)] +=
                    g * ::expf(a->data[static_cast<size_t>(i * n + j)] - out->data[static_cast<size_t>(j)]);
            }
    });
    return out;
}

// ---- shape ops -----------------------------------------------------------

TensorPtr concat_cols(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    require_2d(a, "concat_cols");
    require_2d(b, "concat_cols");
    if (a->shape[0] != b->shape[0])
        throw DimensionError("concat_cols: " + a->shape_str() + " vs " + b->shape_str());
    const int64_t m = a->shape[0], na = a->shape[1], nb = b->shape[1];
    auto out = Tensor::zeros(m, na + nb);
    for (int64_t i = 0; i < m; ++i) {
        std::memcpy(out->data.data() + i * (na + nb), a->data.data() + i * na, static_cast<size_t>(na) * sizeof(float));
        std::memcpy(out->data.data() + i * (na + nb) + na, b->data.data() + i * nb, static_cast<size_t>(nb) * sizeof(float));
    }
    const bool ta = tracked(tape, a), tb = tracked(tape, b);
    record(tape, out, ta || tb, [a, b, out, m, na, nb, ta, tb] {
        if (no_grad(out)) return;
        if (ta) {
            a->ensure_grad();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < na; ++j)
                    a->grad[static_cast<size_t>(i * na + j)] += out->grad[static_cast<size_t>(i * (na + nb) + j)];
        }
        if (tb) {
            b->ensure_grad();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < nb; ++j)
                    b->grad[static_cast<size_t>(i * nb + j)] += out->grad[static_cast<size_t>(i * (na + nb) + na + j)];
        }
    });
    return out;
}

TensorPtr concat_rows(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    require_2d(a, "concat_rows");
    require_2d(b, "concat_rows");
    if (a->shape[1] != b->shape[1])
        throw DimensionError("concat_rows: " + a->shape_str() + " vs " + b->shape_str());
    const int64_t ma = a->shape[0], mb = b->shape[0], n = a->shape[1];
    auto out = Tensor::zeros(ma + mb, n);
    std::memcpy(out->data.data(), a->data.data(), a->data.size() * sizeof(float));
    std::memcpy(out->data.data() + ma * n, b->data.data(), b->data.size() * sizeof(float));
    const bool ta = tracked(tape, a), tb = tracked(tape, b);
    record(tape, out, ta || tb, [a, b, out, ma, mb, n, ta, tb] {
        if (no_grad(out)) return;
        if (ta) {
            a->ensure_grad();
            for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
        }
        if (tb) {
            b->ensure_grad();
            const size_t off = static_cast<size_t>(ma * n);
            for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[off + i];
        }
    });
    return out;
}

TensorPtr slice_cols(Tape* tape, const TensorPtr& a, int64_t start, int64_t len) {
    require_2d(a, "slice_cols");
    const int64_t m = a->shape[0], n = a->shape[1];
    if (start < 0 || len < 0 || start + len > n) throw IndexError("slice_cols range");
    auto out = Tensor::zeros(m, len);
    for (int64_t i = 0; i < m; ++i)
        std::memcpy(out->data.data() + i * len, a->data.data() + i * n + start, static_cast<size_t>(len) * sizeof(float));
    record(tape, out, tracked(tape, a), [a, out, m, n, start, len] {
        if (no_grad(out)) return;
        a->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < len; ++j)
                a->grad[static_cast<size_t>(i * n + start + j)] += out->grad[static_cast<size_t>(i * len + j)];
    });
    return out;
}

TensorPtr slice_rows(Tape* tape, const TensorPtr& a, int64_t start, int64_t len) {
    require_2d(a, "slice_rows");
    const int64_t m = a->shape[0], n = a->shape[1];
    if (start < 0 || len < 0 || start + len > m) throw IndexError("slice_rows range");
    auto out = Tensor::zeros(len, n);
    std::memcpy(out->data.data(), a->data.data() + start * n, static_cast<size_t>(len * n) * sizeof(float));
    record(tape, out, tracked(tape, a), [a, out, n, start] {
        if (no_grad(out)) return;
        a->ensure_grad();
        const size_t off = static_cast<size_t>(start * n);
        for (size_t i = 0; i < out->grad.size(); ++i) a->grad[off + i] += out->grad[i];
    });
    return out;
}

TensorPtr gather_rows(Tape* tape, const TensorPtr& a, const std::vector<int64_t>& idx) {
    require_2d(a, "gather_rows");
    const int64_t m = a->shape[0], n = a->shape[1];
    auto out = Tensor::zeros(static_cast<int64_t>(idx.size()), n);
    for (size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] < 0 || idx[r] >= m) throw IndexError("gather_rows: row " + std::to_string(idx[r]));
        std::memcpy(out->data.data() + static_cast<int64_t>(r) * n, a->data.data() + idx[r] * n,
                    static_cast<size_t>(n) * sizeof(float));
    }
    record(tape, out, tracked(tape, a), [a, out, idx, n] {
        if (no_grad(out)) return;
        a->ensure_grad();
        for (size_t r = 0; r < idx.size(); ++r)
            for (int64_t j = 0; j < n; ++j)
                a->grad[static_cast<size_t>(idx[r] * n + j)] += out->grad[static_cast<size_t>(static_cast<int64_t>(r) * n + j)];
    });
    return out;
}

TensorPtr scatter_rows(Tape* tape, const TensorPtr& a, const std::vector<int64_t>& idx, int64_t n_total) {
    require_2d(a, "scatter_rows");
    const int64_t k = a->shape[0], n = a->shape[1];
    if (static_cast<int64_t>(idx.size()) != k)
        throw DimensionError("scatter_rows: " + std::to_string(idx.size()) + " indices for " + std::to_string(k) + " rows");
    auto out = Tensor::zeros(n_total, n);
    std::vector<char> seen(static_cast<size_t>(n_total), 0);
    for (int64_t r = 0; r < k; ++r) {
        const int64_t dst = idx[static_cast<size_t>(r)];
        if (dst < 0 || dst >= n_total) throw IndexError("scatter_rows: row " + std::to_string(dst));
        if (seen[static_cast<size_t>(dst)]) throw ContractError("scatter_rows: duplicate destination row " + std::to_string(dst));
        seen[static_cast<size_t>(dst)] = 1;
        std::memcpy(out->data.data() + dst * n, a->data.data() + r * n, static_cast<size_t>(n) * sizeof(float));
    }
    record(tape, out, tracked(tape, a), [a, out, idx, n] {
        if (no_grad(out)) return;
        a->ensure_grad();
        for (size_t r = 0; r < idx.size(); ++r)
            for (int64_t j = 0; j < n; ++j)
                a->grad[static_cast<size_t>(static_cast<int64_t>(r) * n + j)] += out->grad[static_cast<size_t>(idx[r] * n + j)];
    });
    return out;
}

TensorPtr reduce_sum(Tape* tape, const TensorPtr& a, int dim) {
    require_2d(a, "reduce_sum");
    const int64_t m = a->shape[0], n = a->shape[1];
    if (dim != 0 && dim != 1) throw ContractError("reduce_sum: dim must be 0 or 1");
    TensorPtr out;
    if (dim == 0) {
        out = Tensor::zeros(1, n);
        std::vector<double> acc(static_cast<size_t>(n), 0.0);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) acc[static_cast<size_t>(j)] += a->data[static_cast<size_t>(i * n + j)];
        for (int64_t j = 0; j < n; ++j) out->data[static_cast<size_t>(j)] = static_cast<float>(acc[static_cast<size_t>(j)]);
    } else {
        out = Tensor::zeros(m, 1);
        for (int64_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j) acc += a->data[static_cast<size_t>(i * n + j)];
            out->data[static_cast<size_t>(i)] = static_cast<float>(acc);
        }
    }
    check_finite(*out, "reduce_sum");
    record(tape, out, tracked(tape, a), [a, out, m, n, dim] {
        if (no_grad(out)) return;
        a->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
                a->grad[static_cast<size_t>(i * n + j)] += out->grad[static_cast<size_t>(dim == 0 ? j : i)];
    });
    return out;
}

TensorPtr reduce_sum_all(Tape* tape, const TensorPtr& a) {
    auto out = Tensor::zeros(1, 1);
    double acc = 0.0;
    for (float v : a->data) acc += v;
    out->data[0] = static_cast<float>(acc);
    check_finite(*out, "reduce_sum_all");
    record(tape, out, tracked(tape, a), [a, out] {
        if (no_grad(out)) return;
        a->ensure_grad();
        const float g = out->grad[0];
        for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    });
    return out;
}

TensorPtr expand_scalar(Tape* tape, const TensorPtr& a, int64_t rows, int64_t cols) {
    if (!a->is_scalar()) throw DimensionError("expand_scalar: source must be scalar");
    auto out = Tensor::full(rows, cols, a->data[0]);
    record(tape, out, tracked(tape, a), [a, out] {
        if (no_grad(out)) return;
        a->ensure_grad();
        double s = 0.0;
        for (float g : out->grad) s += g;
        a->grad[0] += static_cast<float>(s);
    });
    return out;
}

TensorPtr normalize_vec(Tape* tape, const TensorPtr& w) {
    const int64_t n = w->numel();
    double sq = 0.0;
    for (float v : w->data) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) throw NumericError("normalize_vec: zero vector");
    auto out = Tensor::create(w->shape);
    for (int64_t i = 0; i < n; ++i) out->data[static_cast<size_t>(i)] = static_cast<float>(w->data[static_cast<size_t>(i)] / norm);
    record(tape, out, tracked(tape, w), [w, out, n, norm] {
        if (no_grad(out)) return;
        w->ensure_grad();
        // d(w/||w||) = (g - y (y.g)) / ||w||
        double dot = 0.0;
        for (int64_t i = 0; i < n; ++i) dot += static_cast<double>(out->grad[static_cast<size_t>(i)]) * out->data[static_cast<size_t>(i)];
        for (int64_t i = 0; i < n; ++i)
            w->grad[static_cast<size_t>(i)] +=
                static_cast<float>((out->grad[static_cast<size_t>(i)] - out->data[static_cast<size_t>(i)] * dot) / norm);
    });
    return out;
}

}  // namespace paraformer
