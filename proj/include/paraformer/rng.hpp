#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

#include "paraformer/errors.hpp"

namespace paraformer {

// Deterministic xoshiro256++ generator. Self-contained so that streams are
// reproducible across standard-library versions; seeded via splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& s : state_) {
            // splitmix64
            x += 0x9E3779B97F4A7C15ull;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
            s = z ^ (z >> 31);
        }
        has_spare_ = false;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    float uniform_f(float lo, float hi) { return static_cast<float>(uniform(lo, hi)); }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) throw ContractError("uniform_int(0)");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 1e-300);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // k distinct indices drawn uniformly from [0, n), in draw order.
    std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
        if (k < 0 || k > n) throw ContractError("sample_without_replacement: k out of range");
        std::vector<int64_t> pool(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
        std::vector<int64_t> out;
        out.reserve(static_cast<size_t>(k));
        for (int64_t i = 0; i < k; ++i) {
            const uint64_t j = uniform_int(static_cast<uint64_t>(n - i));
            out.push_back(pool[static_cast<size_t>(j)]);
            pool[static_cast<size_t>(j)] = pool[static_cast<size_t>(n - 1 - i)];
        }
        return out;
    }

    // Derive an independent stream, e.g. one per pair or per epoch.
    Rng fork(uint64_t salt) {
        const uint64_t s = next_u64() ^ (salt * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull);
        return Rng(s);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4] = {};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a over a byte string; used for config and file content hashes.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace paraformer
