#include "paraformer/attention.hpp"

#include <cmath>

namespace paraformer {

namespace {

void check_inputs(const TensorPtr& x, const TensorPtr& y, int64_t dim, const char* who) {
    if (x->shape.size() != 2 || y->shape.size() != 2) throw DimensionError(std::string(who) + ": features must be 2-D");
    if (x->shape[0] < 1 || y->shape[0] < 1) throw ContractError(std::string(who) + ": empty point set");
    if (x->shape[1] != dim || y->shape[1] != dim)
        throw DimensionError(std::string(who) + ": feature dim mismatch with layer params");
}

// Averages per-head maps into one row-stochastic map.
TensorPtr average_maps(Tape* tape, const std::vector<TensorPtr>& maps) {
    TensorPtr acc = maps[0];
    for (size_t h = 1; h < maps.size(); ++h) acc = add(tape, acc, maps[h]);
    return scale(tape, acc, 1.0f / static_cast<float>(maps.size()));
}

struct HeadAttnOut {
    TensorPtr merged;                // [rows(q) x C]
    std::vector<TensorPtr> softmax;  // per head
    std::vector<TensorPtr> logits;   // per head, pre-softmax
};

// Attention over pre-split heads, optionally reusing transposed logits.
HeadAttnOut head_attention(Tape* tape, const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                           const Linear& merge_lin, int heads, const std::vector<TensorPtr>* shared_logits) {
    const int64_t c = q->shape[1];
    const int64_t dh = c / heads;
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));
    HeadAttnOut out;
    TensorPtr merged_heads;
    for (int h = 0; h < heads; ++h) {
        TensorPtr logits;
        if (shared_logits != nullptr) {
            logits = transpose(tape, (*shared_logits)[static_cast<size_t>(h)]);
        } else {
            auto qh = heads == 1 ? q : slice_cols(tape, q, h * dh, dh);
            auto kh = heads == 1 ? k : slice_cols(tape, k, h * dh, dh);
            logits = matmul_nt(tape, qh, kh);
        }
        auto attn = softmax_rows(tape, logits, inv_sqrt_dh);
        auto vh = heads == 1 ? v : slice_cols(tape, v, h * dh, dh);
        auto oh = matmul(tape, attn, vh);
        merged_heads = h == 0 ? oh : concat_cols(tape, merged_heads, oh);
        out.softmax.push_back(attn);
        out.logits.push_back(logits);
    }
    out.merged = merge_lin.apply(tape, merged_heads);
    return out;
}

}  // namespace

AttnLayerParams make_attn_layer(ParamStore& store, const std::string& prefix, int64_t dim, int heads, bool share_qkv,
                                bool share_merge, bool share_attn_weights, bool share_fusion, Rng& rng) {
    if (dim % heads != 0) throw ConfigError("feature dim not divisible by head count");
    AttnLayerParams p;
    p.heads = heads;
    p.share_attn_weights = share_attn_weights;
    p.q = make_linear(store, prefix + ".q", dim, dim, rng, Init::XavierUniform);
    p.k = make_linear(store, prefix + ".k", dim, dim, rng, Init::XavierUniform);
    p.v = make_linear(store, prefix + ".v", dim, dim, rng, Init::XavierUniform);
    p.merge = make_linear(store, prefix + ".merge", dim, dim, rng, Init::XavierUniform);
    if (!share_qkv) {
        p.cross_q = make_linear(store, prefix + ".cross_q", dim, dim, rng, Init::XavierUniform);
        p.cross_k = make_linear(store, prefix + ".cross_k", dim, dim, rng, Init::XavierUniform);
        p.cross_v = make_linear(store, prefix + ".cross_v", dim, dim, rng, Init::XavierUniform);
    }
    if (!share_merge) p.cross_merge = make_linear(store, prefix + ".cross_merge", dim, dim, rng, Init::XavierUniform);
    p.fusion_x = make_mlp2(store, prefix + ".fusion_x", 2 * dim, 2 * dim, dim, rng, Init::Zero);
    if (!share_fusion) p.fusion_y = make_mlp2(store, prefix + ".fusion_y", 2 * dim, 2 * dim, dim, rng, Init::Zero);
    return p;
}

ParallelLayerOut parallel_layer(Tape* tape, const TensorPtr& x, const TensorPtr& y, const AttnLayerParams& params,
                                bool want_maps) {
    check_inputs(x, y, params.dim(), "parallel_layer");
    const int heads = params.heads;

    // self path projections, reused by the cross path when shared
    auto qx = params.q.apply(tape, x), kx = params.k.apply(tape, x), vx = params.v.apply(tape, x);
    auto qy = params.q.apply(tape, y), ky = params.k.apply(tape, y), vy = params.v.apply(tape, y);

    auto self_x = head_attention(tape, qx, kx, vx, params.merge, heads, nullptr);
    auto self_y = head_attention(tape, qy, ky, vy, params.merge, heads, nullptr);

    TensorPtr cqx = qx, ckx = kx, cvx = vx, cqy = qy, cky = ky, cvy = vy;
    if (!params.qkv_shared()) {
        cqx = params.cross_q->apply(tape, x);
        ckx = params.cross_k->apply(tape, x);
        cvx = params.cross_v->apply(tape, x);
        cqy = params.cross_q->apply(tape, y);
        cky = params.cross_k->apply(tape, y);
        cvy = params.cross_v->apply(tape, y);
    }
    const Linear& cross_merge = params.merge_shared() ? params.merge : *params.cross_merge;

    auto cross_x = head_attention(tape, cqx, cky, cvy, cross_merge, heads, nullptr);
    // y side: either reuse the transposed x-side logits or compute Q_y K_x^T
    auto cross_y = head_attention(tape, cqy, ckx, cvx, cross_merge, heads,
                                  params.share_attn_weights ? &cross_x.logits : nullptr);

    ParallelLayerOut out;
    out.x = add(tape, x, params.fusion_x.apply(tape, concat_cols(tape, self_x.merged, cross_x.merged)));
    const Mlp2& fusion_y = params.fusion_shared() ? params.fusion_x : *params.fusion_y;
    out.y = add(tape, y, fusion_y.apply(tape, concat_cols(tape, self_y.merged, cross_y.merged)));

    if (want_maps) {
        out.maps.self_x = average_maps(tape, self_x.softmax);
        out.maps.self_y = average_maps(tape, self_y.softmax);
        out.maps.cross_xy = average_maps(tape, cross_x.softmax);
        out.maps.cross_yx = average_maps(tape, cross_y.softmax);
        out.maps.logits_xy_head = cross_x.logits;
        out.maps.logits_yx_head = cross_y.logits;
    }
    return out;
}

SerialPairParams make_serial_pair(ParamStore& store, const std::string& prefix, int64_t dim, int heads, Rng& rng) {
    if (dim % heads != 0) throw ConfigError("feature dim not divisible by head count");
    auto make_round = [&](const std::string& name) {
        SerialRoundParams r;
        r.heads = heads;
        r.q = make_linear(store, name + ".q", dim, dim, rng, Init::XavierUniform);
        r.k = make_linear(store, name + ".k", dim, dim, rng, Init::XavierUniform);
        r.v = make_linear(store, name + ".v", dim, dim, rng, Init::XavierUniform);
        r.merge = make_linear(store, name + ".merge", dim, dim, rng, Init::XavierUniform);
        r.mlp = make_mlp2(store, name + ".mlp", 2 * dim, 2 * dim, dim, rng, Init::Zero);
        return r;
    };
    SerialPairParams p;
    p.self_round = make_round(prefix + ".self");
    p.cross_round = make_round(prefix + ".cross");
    return p;
}

TensorPtr mha(Tape* tape, const TensorPtr& q, const TensorPtr& k, const TensorPtr& v, const Linear& merge, int heads,
              TensorPtr* avg_map_out) {
    auto out = head_attention(tape, q, k, v, merge, heads, nullptr);
    if (avg_map_out != nullptr) *avg_map_out = average_maps(tape, out.softmax);
    return out.merged;
}

SerialPairOut serial_layer_pair(Tape* tape, const TensorPtr& x, const TensorPtr& y, const SerialPairParams& params) {
    check_inputs(x, y, params.self_round.q.w->shape[0], "serial_layer_pair");

    // self round
    const auto& sr = params.self_round;
    auto mx = mha(tape, sr.q.apply(tape, x), sr.k.apply(tape, x), sr.v.apply(tape, x), sr.merge, sr.heads);
    auto my = mha(tape, sr.q.apply(tape, y), sr.k.apply(tape, y), sr.v.apply(tape, y), sr.merge, sr.heads);
    auto x1 = add(tape, x, sr.mlp.apply(tape, concat_cols(tape, x, mx)));
    auto y1 = add(tape, y, sr.mlp.apply(tape, concat_cols(tape, y, my)));

    // cross round
    const auto& cr = params.cross_round;
    auto qx = cr.q.apply(tape, x1), kx = cr.k.apply(tape, x1), vx = cr.v.apply(tape, x1);
    auto qy = cr.q.apply(tape, y1), ky = cr.k.apply(tape, y1), vy = cr.v.apply(tape, y1);
    auto cx = mha(tape, qx, ky, vy, cr.merge, cr.heads);
    auto cy = mha(tape, qy, kx, vx, cr.merge, cr.heads);

    SerialPairOut out;
    out.x = add(tape, x1, cr.mlp.apply(tape, concat_cols(tape, x1, cx)));
    out.y = add(tape, y1, cr.mlp.apply(tape, concat_cols(tape, y1, cy)));
    return out;
}

}  // namespace paraformer
