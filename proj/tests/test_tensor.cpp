#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "paraformer/tensor.hpp"

using namespace paraformer;

namespace {

TensorPtr random_tensor(Rng& rng, int64_t r, int64_t c, bool grad = true, float lo = -1.0f, float hi = 1.0f) {
    auto t = Tensor::zeros(r, c, grad);
    for (auto& v : t->data) v = rng.uniform_f(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic") {
    auto m = Tensor::from_rows({{2, -3}, {0.5, 7}});
    auto eye = Tensor::from_rows({{1, 0}, {0, 1}});
    auto prod = matmul(nullptr, eye, m);
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 2; ++j) CHECK(prod->at(i, j) == m->at(i, j));

    auto a = Tensor::from_rows({{1, 2}, {3, 4}});
    auto b = Tensor::from_rows({{1}, {1}});
    auto c = matmul(nullptr, a, b);
    CHECK(c->at(0, 0) == doctest::Approx(3));
    CHECK(c->at(1, 0) == doctest::Approx(7));
}

TEST_CASE("matmul shape mismatch throws") {
    auto a = Tensor::zeros(2, 3);
    auto b = Tensor::zeros(4, 2);
    CHECK_THROWS_AS(matmul(nullptr, a, b), DimensionError);
}

TEST_CASE("matmul gradient vs central finite differences") {
    Rng rng(11);
    auto a = random_tensor(rng, 4, 3);
    auto b = random_tensor(rng, 3, 5);
    const double err = oracle::fd_check(
        {a, b}, [&](Tape* t) { return reduce_sum_all(t, matmul(t, a, b)); }, 1e-3,
        [&] { return oracle::sum_all(oracle::matmul(oracle::from_tensor(*a), oracle::from_tensor(*b))); });
    CHECK(err < 1e-4);
}

TEST_CASE("matmul associativity") {
    Rng rng(5);
    auto a = random_tensor(rng, 3, 4, false);
    auto b = random_tensor(rng, 4, 5, false);
    auto c = random_tensor(rng, 5, 2, false);
    auto left = matmul(nullptr, matmul(nullptr, a, b), c);
    auto right = matmul(nullptr, a, matmul(nullptr, b, c));
    for (size_t i = 0; i < left->data.size(); ++i) CHECK(left->data[i] == doctest::Approx(right->data[i]).epsilon(1e-5));
}

TEST_CASE("softmax rows: symmetry, stability, sums") {
    auto z = Tensor::from_rows({{0, 0, 0}});
    auto s = softmax_rows(nullptr, z, 1.0f);
    for (int j = 0; j < 3; ++j) CHECK(s->at(0, j) == doctest::Approx(1.0 / 3.0));

    auto big = Tensor::from_rows({{1000, 0}});
    auto sb = softmax_rows(nullptr, big, 1.0f);
    CHECK(sb->at(0, 0) == doctest::Approx(1.0));
    CHECK(sb->at(0, 1) >= 0.0f);
    CHECK(sb->all_finite());

    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        auto a = random_tensor(rng, 5, 5, false, -1e4f, 1e4f);
        auto sm = softmax_rows(nullptr, a, 1.0f);
        for (int64_t i = 0; i < 5; ++i) {
            double row = 0.0;
            for (int64_t j = 0; j < 5; ++j) {
                row += sm->at(i, j);
                CHECK(sm->at(i, j) >= 0.0f);
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("softmax gradient vs finite differences") {
    Rng rng(13);
    auto a = random_tensor(rng, 5, 5);
    auto w = Tensor::from_rows({{0.9f, 1.4f, 0.6f, 1.1f, 0.8f},
                                {1.2f, 0.7f, 1.3f, 0.9f, 1.0f},
                                {0.8f, 1.1f, 0.95f, 1.25f, 0.7f},
                                {1.05f, 0.85f, 1.15f, 0.75f, 1.35f},
                                {0.65f, 1.45f, 0.9f, 1.0f, 1.1f}});
    const double err = oracle::fd_check(
        {a}, [&](Tape* t) { return reduce_sum_all(t, mul(t, softmax_rows(t, a, 0.8f), w)); }, 1e-3,
        [&] {
            return oracle::sum_all(
                oracle::mul(oracle::softmax_rows(oracle::from_tensor(*a), 0.8), oracle::from_tensor(*w)));
        });
    CHECK(err < 1e-4);
}

TEST_CASE("elementwise examples") {
    auto z = Tensor::scalar(0.0f);
    CHECK(sigmoid(nullptr, z)->item() == doctest::Approx(0.5));

    // scatter of a 2x3 into 4 rows at idx {0,2}: rows 1 and 3 are zero
    auto src = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
    auto sc = scatter_rows(nullptr, src, {0, 2}, 4);
    for (int64_t j = 0; j < 3; ++j) {
        CHECK(sc->at(0, j) == src->at(0, j));
        CHECK(sc->at(1, j) == 0.0f);
        CHECK(sc->at(2, j) == src->at(1, j));
        CHECK(sc->at(3, j) == 0.0f);
    }

    // gather -> scatter -> gather round trip reproduces the gathered rows
    Rng rng(3);
    auto a = random_tensor(rng, 6, 4, false);
    std::vector<int64_t> idx = {5, 1, 3};
    auto g1 = gather_rows(nullptr, a, idx);
    auto rt = gather_rows(nullptr, scatter_rows(nullptr, g1, idx, 6), idx);
    for (size_t i = 0; i < g1->data.size(); ++i) CHECK(rt->data[i] == g1->data[i]);
}

TEST_CASE("index errors") {
    auto a = Tensor::zeros(3, 2);
    CHECK_THROWS_AS(gather_rows(nullptr, a, {3}), IndexError);
    CHECK_THROWS_AS(scatter_rows(nullptr, a, {0, 1, 5}, 4), IndexError);
    CHECK_THROWS_AS(scatter_rows(nullptr, a, {1, 1, 2}, 4), ContractError);
}

TEST_CASE("backward: linear case and contracts") {
    // L = sum(W x): dL/dW_ij = x_j for every row i
    auto w = Tensor::zeros(3, 2, true);
    auto x = Tensor::from_rows({{0.5}, {-1.25}});
    Tape tape;
    auto loss = reduce_sum_all(&tape, matmul(&tape, w, x));
    tape.backward(loss);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 2; ++j) CHECK(w->grad[static_cast<size_t>(i * 2 + j)] == doctest::Approx(x->at(j, 0)));

    CHECK_THROWS_AS(tape.backward(loss), ContractError);  // second walk

    Tape t2;
    auto non_scalar = matmul(&t2, w, x);
    CHECK_THROWS_AS(t2.backward(non_scalar), ContractError);
}

TEST_CASE("frozen parameters receive no grad") {
    auto w = Tensor::zeros(2, 2, false);
    w->data = {1, 2, 3, 4};
    auto x = Tensor::zeros(2, 2, true);
    x->data = {1, 1, 1, 1};
    Tape tape;
    auto loss = reduce_sum_all(&tape, matmul(&tape, w, x));
    tape.backward(loss);
    CHECK(w->grad.empty());
    CHECK(!x->grad.empty());
}

TEST_CASE("non-finite results are an error state") {
    auto a = Tensor::full(2, 2, 3e38f);
    CHECK_THROWS_AS(add(nullptr, a, a), NumericError);
    auto b = Tensor::full(1, 1, -3e38f);
    CHECK_THROWS_AS(mul(nullptr, b, b), NumericError);
}

TEST_CASE("gradient property: every differentiable op vs finite differences over many seeds") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed * 77 + 1);
        auto a = random_tensor(rng, 4, 3);
        auto b = random_tensor(rng, 4, 3);
        auto col = random_tensor(rng, 4, 1);
        auto row = random_tensor(rng, 1, 3);
        auto w = Tensor::from_rows({{1.3f, 0.7f, 1.1f}, {0.9f, 1.2f, 0.8f}, {1.0f, 0.6f, 1.4f}, {0.75f, 1.05f, 0.95f}},
                                   false);
        const double err = oracle::fd_check(
            {a, b, col, row},
            [&](Tape* t) {
                auto z = mul(t, add(t, a, b), sub(t, a, b));
                z = add_rowvec(t, z, row);
                z = mul_colvec(t, add_colvec(t, z, col), col);
                z = add(t, z, sigmoid(t, a));
                z = add(t, z, mul(t, sin_op(t, a), cos_op(t, b)));
                z = add(t, z, softmax_rows(t, z, 0.5f));
                auto lr = reduce_sum_all(t, logsumexp_rows(t, z));
                auto lc = reduce_sum_all(t, logsumexp_cols(t, z));
                return add(t, reduce_sum_all(t, mul(t, z, w)), add(t, lr, lc));
            },
            1e-3,
            [&] {
                using namespace oracle;
                const Mat am = from_tensor(*a), bm = from_tensor(*b), wm = from_tensor(*w);
                std::vector<double> colv, rowv;
                for (float v : col->data) colv.push_back(v);
                for (float v : row->data) rowv.push_back(v);
                Mat z = mul(add(am, bm), sub(am, bm));
                z = add_rowvec(z, rowv);
                z = mul_colvec(add_colvec(z, colv), colv);
                z = add(z, sigmoid(am));
                z = add(z, mul(map_sin(am), map_cos(bm)));
                z = add(z, softmax_rows(z, 0.5));
                double lse_sum = 0.0;
                for (double v : lse_rows(z)) lse_sum += v;
                for (double v : lse_cols(z)) lse_sum += v;
                return sum_all(mul(z, wm)) + lse_sum;
            });
        CAPTURE(seed);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("logsumexp matches double-precision reference") {
    Rng rng(31);
    auto a = random_tensor(rng, 6, 4, false, -30.0f, 30.0f);
    auto lr = logsumexp_rows(nullptr, a);
    for (int64_t i = 0; i < 6; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < 4; ++j) s += std::exp(static_cast<double>(a->at(i, j)));
        CHECK(lr->data[static_cast<size_t>(i)] == doctest::Approx(std::log(s)).epsilon(1e-6));
    }
}
