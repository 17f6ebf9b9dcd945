#pragma once

#include <optional>

#include "paraformer/attention.hpp"
#include "paraformer/config.hpp"

namespace paraformer {

// Bookkeeping of one pooling step, needed to unpool back to n_prev rows.
struct PoolingRecord {
    std::vector<int64_t> idx;   // kept rows, ordered by descending score (ties: lower index first)
    std::vector<float> scores;  // pooling score per pre-pool row
    int64_t k = 0;
    int64_t n_prev = 0;

    void validate() const;
};

// Top-k indices of s, descending, stable (equal scores keep index order).
std::vector<int64_t> rank_top_k(const std::vector<float>& s, int64_t k);

struct PoolOut {
    TensorPtr features;  // [k x C_next]
    PoolingRecord record;
};

// Attentional pooling: scores are the column sums of the (row-stochastic)
// self-attention map; kept rows are projected and gated with sigmoid(score).
PoolOut attentional_pool(Tape* tape, const TensorPtr& x, const TensorPtr& self_map, int64_t k, const Linear& proj);

// gPool baseline: scores by projection onto a learnable direction w/||w||.
PoolOut gpool(Tape* tape, const TensorPtr& x, const TensorPtr& proj_vec, int64_t k, const Linear& proj);

// Random pooling baseline: k rows drawn uniformly without replacement, gate 1.
PoolOut random_pool(Tape* tape, const TensorPtr& x, int64_t k, uint64_t seed, const Linear& proj);

// Projects and scatters pooled rows back to their original indices; rows not
// selected by the pooling step are exactly zero.
TensorPtr unpool(Tape* tape, const TensorPtr& x, const PoolingRecord& record, const Linear& proj);

// Parameters of the full encoder-decoder stack.
struct UnetParams {
    StageConfig cfg;
    int heads = 4;
    PoolKind pool_kind = PoolKind::Attentional;
    std::vector<std::vector<AttnLayerParams>> stage_layers;  // per stage
    std::vector<Linear> pool_proj;                           // dims[s] -> dims[s+1], pools after stages 0 and 1
    std::vector<TensorPtr> gpool_vec;                        // per pool, gPool only
    std::vector<Linear> unpool_proj;                         // dims[s] -> dims[s+1], unpools before stages 3 and 4
    std::vector<std::optional<Linear>> skip_proj;            // dim-matching projection when encoder/decoder dims differ
    uint64_t seed = 0;                                       // random pooling stream
};

UnetParams make_unet(ParamStore& store, const std::string& prefix, const ModelConfig& cfg, Rng& rng);

struct UnetDiagnostics {
    std::vector<int64_t> x_counts;  // point count entering each stage
    std::vector<int64_t> y_counts;
    std::vector<PoolingRecord> x_pools;
    std::vector<PoolingRecord> y_pools;
};

struct UnetOut {
    TensorPtr x;  // [M x dims.back()]
    TensorPtr y;  // [N x dims.back()]
    UnetDiagnostics diag;
};

UnetOut unet_forward(Tape* tape, const TensorPtr& x0, const TensorPtr& y0, const UnetParams& params);

}  // namespace paraformer
