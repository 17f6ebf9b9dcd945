#include "paraformer/wave_pe.hpp"

namespace paraformer {

WavePeParams make_wave_pe(ParamStore& store, const std::string& prefix, int64_t dim, Rng& rng) {
    WavePeParams p;
    p.amp = make_mlp2(store, prefix + ".amp", dim, dim, dim, rng);
    p.phase = make_mlp2(store, prefix + ".phase", 3, dim, dim, rng);
    // zero-init the fuse output so training starts from the identity encoding
    p.fuse = make_mlp2(store, prefix + ".fuse", 2 * dim, 2 * dim, dim, rng, Init::Zero);
    return p;
}

WaveParts wave_encode_parts(Tape* tape, const KeypointSet& kp, const WavePeParams& params) {
    const auto& d = kp.descriptors;
    if (d->shape[1] != params.amp.l1.in_dim())
        throw ConfigError("wave pe: descriptor dim " + std::to_string(d->shape[1]) + " does not match params dim " +
                          std::to_string(params.amp.l1.in_dim()));
    WaveParts parts;
    parts.amplitude = params.amp.apply(tape, d);
    parts.phase = params.phase.apply(tape, kp.normalized_positions());
    auto real = mul(tape, parts.amplitude, cos_op(tape, parts.phase));
    auto imag = mul(tape, parts.amplitude, sin_op(tape, parts.phase));
    auto wave = concat_cols(tape, real, imag);
    parts.encoded = add(tape, d, params.fuse.apply(tape, wave));
    return parts;
}

TensorPtr wave_encode(Tape* tape, const KeypointSet& kp, const WavePeParams& params) {
    return wave_encode_parts(tape, kp, params).encoded;
}

MlpPeParams make_mlp_pe(ParamStore& store, const std::string& prefix, int64_t dim, Rng& rng) {
    MlpPeParams p;
    p.mlp = make_mlpn(store, prefix + ".mlp", {3, 32, 64, 128, dim}, rng, Init::Zero);
    return p;
}

TensorPtr mlp_encode(Tape* tape, const KeypointSet& kp, const MlpPeParams& params) {
    const auto& d = kp.descriptors;
    if (d->shape[1] != params.mlp.layers.back().out_dim())
        throw ConfigError("mlp pe: descriptor dim does not match params dim");
    return add(tape, d, params.mlp.apply(tape, kp.normalized_positions()));
}

}  // namespace paraformer
