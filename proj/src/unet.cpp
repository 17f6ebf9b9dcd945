#include "paraformer/unet.hpp"

#include <algorithm>
#include <numeric>

namespace paraformer {

void PoolingRecord::validate() const {
    if (k != static_cast<int64_t>(idx.size())) throw ContractError("pooling record: k does not match idx size");
    if (n_prev < k) throw ContractError("pooling record: more selected rows than source rows");
    std::vector<char> seen(static_cast<size_t>(n_prev), 0);
    for (int64_t i : idx) {
        if (i < 0 || i >= n_prev) throw IndexError("pooling record: idx " + std::to_string(i));
        if (seen[static_cast<size_t>(i)]) throw ContractError("pooling record: duplicate idx " + std::to_string(i));
        seen[static_cast<size_t>(i)] = 1;
    }
}

std::vector<int64_t> rank_top_k(const std::vector<float>& s, int64_t k) {
    const int64_t n = static_cast<int64_t>(s.size());
    if (k < 1) throw ContractError("rank_top_k: k must be >= 1");
    if (k > n) throw ContractError("rank_top_k: k exceeds point count");
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        return s[static_cast<size_t>(a)] > s[static_cast<size_t>(b)];
    });
    order.resize(static_cast<size_t>(k));
    if (kink::active())
        for (int64_t i : order) kink::note(static_cast<uint64_t>(i) + 0x9E37u);
    return order;
}

namespace {

PoolOut finish_pool(Tape* tape, const TensorPtr& x, const TensorPtr& score_col, std::vector<float> raw_scores,
                    int64_t k, const Linear& proj, bool gate) {
    const int64_t n = x->shape[0];
    PoolOut out;
    out.record.idx = rank_top_k(raw_scores, k);
    out.record.scores = std::move(raw_scores);
    out.record.k = k;
    out.record.n_prev = n;

    auto projected = proj.apply(tape, gather_rows(tape, x, out.record.idx));
    if (gate) {
        auto g = sigmoid(tape, gather_rows(tape, score_col, out.record.idx));
        out.features = mul_colvec(tape, projected, g);
    } else {
        out.features = projected;
    }
    return out;
}

}  // namespace

PoolOut attentional_pool(Tape* tape, const TensorPtr& x, const TensorPtr& self_map, int64_t k, const Linear& proj) {
    const int64_t n = x->shape[0];
    if (self_map->shape.size() != 2 || self_map->shape[0] != n || self_map->shape[1] != n)
        throw DimensionError("attentional_pool: self map must be [N x N]");
    // pooling score: sum of each column of the self-attention map
    auto s_row = reduce_sum(tape, self_map, 0);        // [1 x N]
    auto s_col = transpose(tape, s_row);               // [N x 1]
    std::vector<float> raw(s_col->data.begin(), s_col->data.end());
    return finish_pool(tape, x, s_col, std::move(raw), k, proj, true);
}

PoolOut gpool(Tape* tape, const TensorPtr& x, const TensorPtr& proj_vec, int64_t k, const Linear& proj) {
    if (proj_vec->shape.size() != 2 || proj_vec->shape[0] != x->shape[1] || proj_vec->shape[1] != 1)
        throw DimensionError("gpool: projection vector must be [C x 1]");
    auto s_col = matmul(tape, x, normalize_vec(tape, proj_vec));  // [N x 1]
    std::vector<float> raw(s_col->data.begin(), s_col->data.end());
    return finish_pool(tape, x, s_col, std::move(raw), k, proj, true);
}

PoolOut random_pool(Tape* tape, const TensorPtr& x, int64_t k, uint64_t seed, const Linear& proj) {
    const int64_t n = x->shape[0];
    if (k < 1) throw ContractError("random_pool: k must be >= 1");
    if (k > n) throw ContractError("random_pool: k exceeds point count");
    Rng rng(seed);
    PoolOut out;
    out.record.idx = rng.sample_without_replacement(n, k);
    out.record.scores.assign(static_cast<size_t>(n), 0.0f);
    out.record.k = k;
    out.record.n_prev = n;
    out.features = proj.apply(tape, gather_rows(tape, x, out.record.idx));
    return out;
}

TensorPtr unpool(Tape* tape, const TensorPtr& x, const PoolingRecord& record, const Linear& proj) {
    record.validate();
    if (x->shape[0] != record.k) throw ContractError("unpool: feature rows do not match pooling record");
    return scatter_rows(tape, proj.apply(tape, x), record.idx, record.n_prev);
}

UnetParams make_unet(ParamStore& store, const std::string& prefix, const ModelConfig& cfg, Rng& rng) {
    cfg.stages.validate(cfg.heads);
    UnetParams p;
    p.cfg = cfg.stages;
    p.heads = cfg.heads;
    p.pool_kind = cfg.pool;
    p.seed = cfg.seed;
    const auto& dims = cfg.stages.dims;
    for (size_t s = 0; s < cfg.stages.depths.size(); ++s) {
        std::vector<AttnLayerParams> layers;
        for (int l = 0; l < cfg.stages.depths[s]; ++l) {
            layers.push_back(make_attn_layer(store, prefix + ".stage" + std::to_string(s + 1) + ".layer" + std::to_string(l),
                                             dims[s], cfg.heads, cfg.share_qkv, cfg.share_merge, cfg.share_attn_weights,
                                             cfg.share_fusion, rng));
        }
        p.stage_layers.push_back(std::move(layers));
    }
    for (int i = 0; i < 2; ++i) {
        p.pool_proj.push_back(make_linear(store, prefix + ".pool" + std::to_string(i + 1) + ".proj", dims[static_cast<size_t>(i)],
                                          dims[static_cast<size_t>(i + 1)], rng, Init::XavierUniform));
        if (cfg.pool == PoolKind::GPool) {
            auto vec = store.add(prefix + ".pool" + std::to_string(i + 1) + ".gpool_w",
                                 Tensor::zeros(dims[static_cast<size_t>(i)], 1, true));
            Rng tmp = rng.fork(static_cast<uint64_t>(i));
            for (auto& v : vec->data) v = tmp.uniform_f(-1.0f, 1.0f);
            p.gpool_vec.push_back(vec);
        }
    }
    for (int i = 0; i < 2; ++i) {
        const size_t s = static_cast<size_t>(2 + i);  // decoder stages take dims[s] -> dims[s+1]
        p.unpool_proj.push_back(
            make_linear(store, prefix + ".unpool" + std::to_string(i + 1) + ".proj", dims[s], dims[s + 1], rng, Init::XavierUniform));
        // skip source: encoder stage output with matching point count
        const size_t skip_from = static_cast<size_t>(1 - i);
        if (dims[skip_from] != dims[s + 1]) {
            p.skip_proj.push_back(make_linear(store, prefix + ".skip" + std::to_string(i + 1) + ".proj", dims[skip_from],
                                              dims[s + 1], rng, Init::XavierUniform));
        } else {
            p.skip_proj.push_back(std::nullopt);
        }
    }
    return p;
}

namespace {

int64_t half_count(int64_t n) { return (n + 1) / 2; }

PoolOut run_pool(Tape* tape, const UnetParams& params, size_t pool_index, const TensorPtr& feat, const TensorPtr& self_map,
                 uint64_t salt) {
    const int64_t k = half_count(feat->shape[0]);
    switch (params.pool_kind) {
        case PoolKind::Attentional:
            return attentional_pool(tape, feat, self_map, k, params.pool_proj[pool_index]);
        case PoolKind::GPool:
            return gpool(tape, feat, params.gpool_vec[pool_index], k, params.pool_proj[pool_index]);
        case PoolKind::Random:
            return random_pool(tape, feat, k, params.seed * 0x9E3779B97F4A7C15ull + salt, params.pool_proj[pool_index]);
    }
    throw ContractError("unknown pool kind");
}

}  // namespace

UnetOut unet_forward(Tape* tape, const TensorPtr& x0, const TensorPtr& y0, const UnetParams& params) {
    if (x0->shape[0] < 4 || y0->shape[0] < 4)
        throw ContractError("unet_forward: need at least 4 points per image for two pooling levels");

    UnetOut out;
    TensorPtr x = x0, y = y0;
    std::vector<TensorPtr> x_skips, y_skips;  // encoder stage outputs
    const size_t n_stages = params.stage_layers.size();
    for (size_t s = 0; s < n_stages; ++s) {
        // decoder stages start by unpooling the previous stage's output and
        // fusing the mirrored encoder output through the skip connection
        if (s >= 3) {
            const size_t u = s - 3;
            const auto& x_rec = out.diag.x_pools[1 - u];
            const auto& y_rec = out.diag.y_pools[1 - u];
            x = unpool(tape, x, x_rec, params.unpool_proj[u]);
            y = unpool(tape, y, y_rec, params.unpool_proj[u]);
            TensorPtr x_skip = x_skips[1 - u], y_skip = y_skips[1 - u];
            if (params.skip_proj[u].has_value()) {
                x_skip = params.skip_proj[u]->apply(tape, x_skip);
                y_skip = params.skip_proj[u]->apply(tape, y_skip);
            }
            x = add(tape, x, x_skip);
            y = add(tape, y, y_skip);
        }

        out.diag.x_counts.push_back(x->shape[0]);
        out.diag.y_counts.push_back(y->shape[0]);

        const auto& layers = params.stage_layers[s];
        const bool pool_next = s < 2;
        AttentionMaps last_maps;
        for (size_t l = 0; l < layers.size(); ++l) {
            const bool want_maps = pool_next && (l + 1 == layers.size()) && params.pool_kind == PoolKind::Attentional;
            auto lo = parallel_layer(tape, x, y, layers[l], want_maps);
            x = lo.x;
            y = lo.y;
            if (want_maps) last_maps = lo.maps;
        }

        if (pool_next) {
            // each image pools on its own self-attention map from the last layer of the stage
            auto px = run_pool(tape, params, s, x, last_maps.self_x, 2 * s);
            auto py = run_pool(tape, params, s, y, last_maps.self_y, 2 * s + 1);
            x_skips.push_back(x);
            y_skips.push_back(y);
            x = px.features;
            y = py.features;
            out.diag.x_pools.push_back(std::move(px.record));
            out.diag.y_pools.push_back(std::move(py.record));
        }
    }
    out.x = x;
    out.y = y;
    return out;
}

}  // namespace paraformer
