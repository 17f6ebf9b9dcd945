#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "paraformer/wave_pe.hpp"

using namespace paraformer;

namespace {

KeypointSet make_kp(Rng& rng, int64_t m, int64_t c, int64_t w = 64, int64_t h = 48) {
    KeypointSet kp;
    kp.image_width = w;
    kp.image_height = h;
    kp.positions = Tensor::zeros(m, 3);
    kp.descriptors = Tensor::zeros(m, c);
    for (int64_t i = 0; i < m; ++i) {
        kp.positions->at(i, 0) = rng.uniform_f(0.0f, static_cast<float>(w) - 1.0f);
        kp.positions->at(i, 1) = rng.uniform_f(0.0f, static_cast<float>(h) - 1.0f);
        kp.positions->at(i, 2) = rng.uniform_f(0.0f, 1.0f);
        double norm = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            kp.descriptors->at(i, j) = static_cast<float>(rng.normal());
            norm += static_cast<double>(kp.descriptors->at(i, j)) * kp.descriptors->at(i, j);
        }
        norm = std::sqrt(norm);
        for (int64_t j = 0; j < c; ++j) kp.descriptors->at(i, j) = static_cast<float>(kp.descriptors->at(i, j) / norm);
    }
    kp.validate();
    return kp;
}

KeypointSet permute_kp(const KeypointSet& kp, const std::vector<int64_t>& perm) {
    KeypointSet out;
    out.image_width = kp.image_width;
    out.image_height = kp.image_height;
    out.positions = gather_rows(nullptr, kp.positions, perm);
    out.descriptors = gather_rows(nullptr, kp.descriptors, perm);
    return out;
}

}  // namespace

TEST_CASE("wave encode: zero-initialized fuse output gives x0 = d exactly") {
    Rng rng(1);
    ParamStore store;
    auto pe = make_wave_pe(store, "pe", 8, rng);  // fuse.l2 is zero-initialized
    auto kp = make_kp(rng, 5, 8);
    auto x0 = wave_encode(nullptr, kp, pe);
    for (size_t i = 0; i < x0->data.size(); ++i) CHECK(x0->data[i] == kp.descriptors->data[i]);
}

TEST_CASE("wave encode: zero phase network reduces to the real branch") {
    Rng rng(2);
    ParamStore store;
    auto pe = make_wave_pe(store, "pe", 6, rng);
    // force theta = 0: cos(0) = 1 so the real branch is A, the imaginary branch 0
    std::fill(pe.phase.l1.w->data.begin(), pe.phase.l1.w->data.end(), 0.0f);
    std::fill(pe.phase.l1.b->data.begin(), pe.phase.l1.b->data.end(), 0.0f);
    std::fill(pe.phase.l2.w->data.begin(), pe.phase.l2.w->data.end(), 0.0f);
    std::fill(pe.phase.l2.b->data.begin(), pe.phase.l2.b->data.end(), 0.0f);
    auto kp = make_kp(rng, 4, 6);
    auto parts = wave_encode_parts(nullptr, kp, pe);
    for (size_t i = 0; i < parts.phase->data.size(); ++i) CHECK(parts.phase->data[i] == 0.0f);
    // with theta = 0, [A cos, A sin] = [A, 0]
    auto amp = oracle::from_tensor(*parts.amplitude);
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 6; ++j) {
            CHECK(parts.amplitude->at(i, j) == doctest::Approx(amp[static_cast<size_t>(i)][static_cast<size_t>(j)]));
        }
}

TEST_CASE("wave encode matches the loop-level oracle") {
    Rng rng(42);
    ParamStore store;
    auto pe = make_wave_pe(store, "pe", 8, rng);
    // non-trivial fuse output
    for (auto& v : pe.fuse.l2.w->data) v = rng.uniform_f(-0.5f, 0.5f);
    auto kp = make_kp(rng, 4, 8);
    auto got = wave_encode(nullptr, kp, pe);
    auto want = oracle::wave_encode(oracle::from_tensor(*kp.descriptors),
                                    oracle::from_tensor(*kp.normalized_positions()), pe);
    CHECK(oracle::max_abs_diff(want, *got) < 1e-6);
}

TEST_CASE("wave encode: theta depends on positions only") {
    Rng rng(9);
    ParamStore store;
    auto pe = make_wave_pe(store, "pe", 8, rng);
    auto kp = make_kp(rng, 5, 8);
    auto parts1 = wave_encode_parts(nullptr, kp, pe);

    // perturb descriptors, keep positions: amplitude changes, phase must not
    KeypointSet kp2 = kp;
    kp2.descriptors = Tensor::zeros(5, 8);
    Rng rng2(1234);
    for (int64_t i = 0; i < 5; ++i) {
        double norm = 0.0;
        for (int64_t j = 0; j < 8; ++j) {
            kp2.descriptors->at(i, j) = static_cast<float>(rng2.normal());
            norm += static_cast<double>(kp2.descriptors->at(i, j)) * kp2.descriptors->at(i, j);
        }
        norm = std::sqrt(norm);
        for (int64_t j = 0; j < 8; ++j) kp2.descriptors->at(i, j) = static_cast<float>(kp2.descriptors->at(i, j) / norm);
    }
    auto parts2 = wave_encode_parts(nullptr, kp2, pe);
    for (size_t i = 0; i < parts1.phase->data.size(); ++i) CHECK(parts1.phase->data[i] == parts2.phase->data[i]);
    bool amp_changed = false;
    for (size_t i = 0; i < parts1.amplitude->data.size(); ++i)
        amp_changed = amp_changed || parts1.amplitude->data[i] != parts2.amplitude->data[i];
    CHECK(amp_changed);
}

TEST_CASE("wave encode accepts any point count and is sensitive to the score channel") {
    Rng rng(15);
    ParamStore store;
    auto pe = make_wave_pe(store, "pe", 8, rng);
    for (auto& v : pe.fuse.l2.w->data) v = rng.uniform_f(-0.5f, 0.5f);
    for (int64_t m : {1, 2, 9}) {
        auto kp = make_kp(rng, m, 8);
        auto x0 = wave_encode(nullptr, kp, pe);
        CHECK(x0->shape[0] == m);
        CHECK(x0->shape[1] == 8);
    }

    // all three position channels, including the detection score, feed theta
    auto kp = make_kp(rng, 4, 8);
    auto before = wave_encode_parts(nullptr, kp, pe);
    kp.positions->at(2, 2) = kp.positions->at(2, 2) < 0.5f ? 0.9f : 0.1f;
    auto after = wave_encode_parts(nullptr, kp, pe);
    bool theta_changed = false;
    for (int64_t j = 0; j < 8; ++j) theta_changed = theta_changed || before.phase->at(2, j) != after.phase->at(2, j);
    CHECK(theta_changed);
}

TEST_CASE("mlp encode: zero final layer gives x0 = d, any M works") {
    Rng rng(3);
    ParamStore store;
    auto pe = make_mlp_pe(store, "pe", 16, rng);
    for (int64_t m : {1, 2, 7}) {
        auto kp = make_kp(rng, m, 16);
        auto x0 = mlp_encode(nullptr, kp, pe);
        CHECK(x0->shape[0] == m);
        CHECK(x0->shape[1] == 16);
        for (size_t i = 0; i < x0->data.size(); ++i) CHECK(x0->data[i] == kp.descriptors->data[i]);
    }
}

TEST_CASE("mlp encode matches a loop-level oracle") {
    Rng rng(4);
    ParamStore store;
    auto pe = make_mlp_pe(store, "pe", 8, rng);
    for (auto& v : pe.mlp.layers.back().w->data) v = rng.uniform_f(-0.5f, 0.5f);
    auto kp = make_kp(rng, 5, 8);
    auto got = mlp_encode(nullptr, kp, pe);

    auto h = oracle::from_tensor(*kp.normalized_positions());
    for (size_t l = 0; l < pe.mlp.layers.size(); ++l) {
        h = oracle::linear(h, pe.mlp.layers[l]);
        if (l + 1 < pe.mlp.layers.size()) h = oracle::relu(h);
    }
    auto d = oracle::from_tensor(*kp.descriptors);
    for (size_t i = 0; i < h.size(); ++i)
        for (size_t j = 0; j < h[i].size(); ++j) h[i][j] += d[i][j];
    CHECK(oracle::max_abs_diff(h, *got) < 1e-6);
}

TEST_CASE("both encoders are permutation equivariant (exact)") {
    Rng rng(6);
    ParamStore store;
    auto wave = make_wave_pe(store, "w", 8, rng);
    for (auto& v : wave.fuse.l2.w->data) v = rng.uniform_f(-0.5f, 0.5f);
    auto mlp = make_mlp_pe(store, "m", 8, rng);
    for (auto& v : mlp.mlp.layers.back().w->data) v = rng.uniform_f(-0.5f, 0.5f);

    auto kp = make_kp(rng, 6, 8);
    std::vector<int64_t> perm = {3, 0, 5, 1, 4, 2};
    auto kp_perm = permute_kp(kp, perm);

    auto w1 = wave_encode(nullptr, kp, wave);
    auto w2 = wave_encode(nullptr, kp_perm, wave);
    auto m1 = mlp_encode(nullptr, kp, mlp);
    auto m2 = mlp_encode(nullptr, kp_perm, mlp);
    for (size_t r = 0; r < perm.size(); ++r)
        for (int64_t j = 0; j < 8; ++j) {
            CHECK(w2->at(static_cast<int64_t>(r), j) == w1->at(perm[r], j));
            CHECK(m2->at(static_cast<int64_t>(r), j) == m1->at(perm[r], j));
        }
}

TEST_CASE("dim mismatch between descriptors and params is a config error") {
    Rng rng(8);
    ParamStore store;
    auto pe = make_wave_pe(store, "pe", 8, rng);
    auto kp = make_kp(rng, 3, 16);
    CHECK_THROWS_AS(wave_encode(nullptr, kp, pe), ConfigError);
}
