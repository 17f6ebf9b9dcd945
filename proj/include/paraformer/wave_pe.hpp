#pragma once

#include "paraformer/keypoints.hpp"
#include "paraformer/params.hpp"

namespace paraformer {

// Wave position encoder: descriptors drive the amplitude, positions the
// phase, and the Euler expansion [A*cos(theta), A*sin(theta)] is fused back
// onto the descriptors by a two-layer MLP inside a residual connection.
struct WavePeParams {
    Mlp2 amp;    // C -> C -> C
    Mlp2 phase;  // 3 -> C -> C
    Mlp2 fuse;   // 2C -> 2C -> C, final layer zero-initialized
};

WavePeParams make_wave_pe(ParamStore& store, const std::string& prefix, int64_t dim, Rng& rng);

TensorPtr wave_encode(Tape* tape, const KeypointSet& kp, const WavePeParams& params);

// Intermediate wave quantities, exposed for tests and diagnostics.
struct WaveParts {
    TensorPtr amplitude;  // [M x C]
    TensorPtr phase;      // [M x C]
    TensorPtr encoded;    // [M x C]
};
WaveParts wave_encode_parts(Tape* tape, const KeypointSet& kp, const WavePeParams& params);

// Baseline MLP position encoder: x0 = d + MLP(p_hat), 3 -> 32 -> 64 -> 128 -> C.
struct MlpPeParams {
    MlpN mlp;
};

MlpPeParams make_mlp_pe(ParamStore& store, const std::string& prefix, int64_t dim, Rng& rng);

TensorPtr mlp_encode(Tape* tape, const KeypointSet& kp, const MlpPeParams& params);

}  // namespace paraformer
