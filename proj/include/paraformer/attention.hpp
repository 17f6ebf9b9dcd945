#pragma once

#include <optional>

#include "paraformer/params.hpp"

namespace paraformer {

// One parallel attention layer: shared Q/K/V projections feed self- and
// cross-attention computed synchronously; with attention weight sharing the
// y-side cross logits reuse the transposed x-side logits instead of a second
// Q K^T product. Outputs are fused per image by a two-layer MLP inside a
// residual connection.
struct AttnLayerParams {
    int heads = 4;
    bool share_attn_weights = true;

    Linear q, k, v;  // C x C, used by the self path and, when shared, the cross path
    Linear merge;    // C x C head merging
    std::optional<Linear> cross_q, cross_k, cross_v;  // present when the QKV projections are not shared
    std::optional<Linear> cross_merge;                // present when head merging is not shared
    Mlp2 fusion_x;                                    // 2C -> 2C -> C
    std::optional<Mlp2> fusion_y;                     // present when the fusion MLP is not shared across branches

    bool qkv_shared() const { return !cross_q.has_value(); }
    bool merge_shared() const { return !cross_merge.has_value(); }
    bool fusion_shared() const { return !fusion_y.has_value(); }
    int64_t dim() const { return q.w->shape[0]; }
};

AttnLayerParams make_attn_layer(ParamStore& store, const std::string& prefix, int64_t dim, int heads,
                                bool share_qkv, bool share_merge, bool share_attn_weights, bool share_fusion,
                                Rng& rng);

// Row-stochastic attention maps (averaged over heads) plus the raw per-head
// cross logits, kept for pooling, diagnostics and tests.
struct AttentionMaps {
    TensorPtr self_x;                       // [M x M]
    TensorPtr self_y;                       // [N x N]
    TensorPtr cross_xy;                     // [M x N], softmax over y
    TensorPtr cross_yx;                     // [N x M], softmax over x
    std::vector<TensorPtr> logits_xy_head;  // pre-softmax, per head
    std::vector<TensorPtr> logits_yx_head;  // pre-softmax, per head
};

struct ParallelLayerOut {
    TensorPtr x;  // [M x C]
    TensorPtr y;  // [N x C]
    AttentionMaps maps;  // populated when want_maps
};

ParallelLayerOut parallel_layer(Tape* tape, const TensorPtr& x, const TensorPtr& y, const AttnLayerParams& params,
                                bool want_maps = false);

// Serial baseline: one self-attention round followed by one cross-attention
// round, each with its own projections and residual message MLP
// (x1 = x + MLP([x, m])).
struct SerialRoundParams {
    int heads = 4;
    Linear q, k, v, merge;
    Mlp2 mlp;  // 2C -> 2C -> C
};

struct SerialPairParams {
    SerialRoundParams self_round;
    SerialRoundParams cross_round;
};

SerialPairParams make_serial_pair(ParamStore& store, const std::string& prefix, int64_t dim, int heads, Rng& rng);

struct SerialPairOut {
    TensorPtr x;
    TensorPtr y;
};

SerialPairOut serial_layer_pair(Tape* tape, const TensorPtr& x, const TensorPtr& y, const SerialPairParams& params);

// Multi-head attention with already-projected q/k/v, softmax(q k^T / sqrt(dh)) v
// followed by the merge projection. Exposed for oracle-level tests.
TensorPtr mha(Tape* tape, const TensorPtr& q, const TensorPtr& k, const TensorPtr& v, const Linear& merge, int heads,
              TensorPtr* avg_map_out = nullptr);

}  // namespace paraformer
