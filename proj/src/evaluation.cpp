#include "paraformer/evaluation.hpp"

#include <algorithm>
#include <cmath>

namespace paraformer {

nlohmann::json MetricsReport::to_json() const {
    return {{"precision", precision}, {"recall", recall}, {"f1", f1},     {"auc10", auc10},
            {"mma", mma},             {"tp", tp},         {"fp", fp},     {"fn", fn},
            {"empty_matches", empty_matches}};
}

MetricsReport compute_metrics(const MatchSet& matches, const PairSample& sample, double correct_threshold) {
    MetricsReport r;
    r.mma.assign(10, 0.0);
    const int64_t gt_count = static_cast<int64_t>(sample.gt.matches.size());
    if (gt_count == 0) throw ContractError("compute_metrics: sample has no ground-truth matches");

    std::vector<char> gt_matched_x(static_cast<size_t>(sample.x.count()), 0);
    for (const auto& [i, j] : sample.gt.matches) gt_matched_x[static_cast<size_t>(i)] = 1;

    if (matches.empty()) {
        r.empty_matches = true;
        r.fn = gt_count;
        return r;
    }

    std::vector<double> errors;
    errors.reserve(matches.size());
    for (const auto& m : matches) {
        const double err = reprojection_error(sample, m.i, m.j);
        errors.push_back(err);
        // a true positive must also involve a point that actually has a match
        if (err < correct_threshold && gt_matched_x[static_cast<size_t>(m.i)]) ++r.tp;
        for (int t = 1; t <= 10; ++t)
            if (err < static_cast<double>(t)) r.mma[static_cast<size_t>(t - 1)] += 1.0;
    }
    const double k = static_cast<double>(matches.size());
    for (auto& v : r.mma) v /= k;
    r.fp = static_cast<int64_t>(matches.size()) - r.tp;
    r.fn = gt_count - r.tp;
    r.precision = static_cast<double>(r.tp) / k;
    r.recall = static_cast<double>(r.tp) / static_cast<double>(gt_count);
    r.f1 = (r.precision + r.recall > 0.0) ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;

    // area under the cumulative fraction-correct curve up to 10 px; the curve
    // is a step function so the trapezoid sum collapses to (10 - e)+ terms
    double area = 0.0;
    for (double e : errors) area += std::max(0.0, 10.0 - std::min(e, 10.0));
    r.auc10 = area / (10.0 * k);
    return r;
}

MetricsReport aggregate_metrics(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw ContractError("aggregate_metrics: no reports");
    MetricsReport agg;
    agg.mma.assign(10, 0.0);
    for (const auto& r : reports) {
        agg.precision += r.precision;
        agg.recall += r.recall;
        agg.f1 += r.f1;
        agg.auc10 += r.auc10;
        for (size_t t = 0; t < 10; ++t) agg.mma[t] += (r.mma.size() == 10 ? r.mma[t] : 0.0);
        agg.tp += r.tp;
        agg.fp += r.fp;
        agg.fn += r.fn;
        agg.empty_matches = agg.empty_matches || r.empty_matches;
    }
    const double n = static_cast<double>(reports.size());
    agg.precision /= n;
    agg.recall /= n;
    agg.f1 /= n;
    agg.auc10 /= n;
    for (auto& v : agg.mma) v /= n;
    return agg;
}

MatchSet nn_baseline(const KeypointSet& kx, const KeypointSet& ky, bool mutual) {
    kx.validate();
    ky.validate();
    const int64_t m = kx.count(), n = ky.count(), c = kx.descriptor_dim();
    if (c != ky.descriptor_dim()) throw DimensionError("nn_baseline: descriptor dims differ");

    auto sim_row = [&](int64_t i, int64_t j) {
        double s = 0.0;
        for (int64_t d = 0; d < c; ++d)
            s += static_cast<double>(kx.descriptors->at(i, d)) * ky.descriptors->at(j, d);
        return s;
    };

    std::vector<int64_t> best_j(static_cast<size_t>(m), -1);
    std::vector<double> best_sim(static_cast<size_t>(m), -INFINITY);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            const double s = sim_row(i, j);
            if (s > best_sim[static_cast<size_t>(i)]) {
                best_sim[static_cast<size_t>(i)] = s;
                best_j[static_cast<size_t>(i)] = j;
            }
        }

    std::vector<int64_t> best_i;
    if (mutual) {
        best_i.assign(static_cast<size_t>(n), -1);
        std::vector<double> best(static_cast<size_t>(n), -INFINITY);
        for (int64_t j = 0; j < n; ++j)
            for (int64_t i = 0; i < m; ++i) {
                const double s = sim_row(i, j);
                if (s > best[static_cast<size_t>(j)]) {
                    best[static_cast<size_t>(j)] = s;
                    best_i[static_cast<size_t>(j)] = i;
                }
            }
    }

    MatchSet out;
    for (int64_t i = 0; i < m; ++i) {
        const int64_t j = best_j[static_cast<size_t>(i)];
        if (j < 0) continue;
        if (mutual && best_i[static_cast<size_t>(j)] != i) continue;
        const double conf = std::clamp((best_sim[static_cast<size_t>(i)] + 1.0) / 2.0, 1e-6, 1.0);
        out.push_back({i, j, static_cast<float>(conf)});
    }
    return out;
}

// ---- flops model ----------------------------------------------------------

namespace {

int64_t matmul_flops(int64_t m, int64_t k, int64_t n) { return 2 * m * k * n; }
int64_t linear_flops(int64_t rows, int64_t in, int64_t out) { return matmul_flops(rows, in, out) + rows * out; }
int64_t mlp2_flops(int64_t rows, int64_t in, int64_t hid, int64_t out) {
    return linear_flops(rows, in, hid) + rows * hid + linear_flops(rows, hid, out);
}
// softmax over scaled logits: 5 ops/element + 1 for the scale
int64_t softmax_flops(int64_t elems) { return 6 * elems; }

struct LayerCounts {
    int64_t projections = 0;
    int64_t logits = 0;
    int64_t values = 0;
    int64_t fusion = 0;
};

// One attention computation for query rows r against key rows s at width c.
void add_attention(LayerCounts& lc, int64_t r, int64_t s, int64_t c, int64_t heads, bool count_logit_matmul) {
    if (count_logit_matmul) lc.logits += matmul_flops(r, c, s);
    lc.logits += softmax_flops(heads * r * s);
    lc.values += matmul_flops(r, c, s);  // h x [r x s][s x c/h]
    lc.projections += linear_flops(r, c, c);  // head merging
}

LayerCounts parallel_layer_flops(int64_t m, int64_t n, int64_t c, int64_t heads, bool share_qkv, bool share_attn) {
    LayerCounts lc;
    lc.projections += 3 * (linear_flops(m, c, c) + linear_flops(n, c, c));
    if (!share_qkv) lc.projections += 3 * (linear_flops(m, c, c) + linear_flops(n, c, c));
    add_attention(lc, m, m, c, heads, true);   // self x
    add_attention(lc, n, n, c, heads, true);   // self y
    add_attention(lc, m, n, c, heads, true);   // cross x->y
    add_attention(lc, n, m, c, heads, !share_attn);  // y side reuses transposed logits when shared
    lc.fusion += mlp2_flops(m, 2 * c, 2 * c, c) + m * c;  // + residual add
    lc.fusion += mlp2_flops(n, 2 * c, 2 * c, c) + n * c;
    return lc;
}

LayerCounts serial_pair_flops(int64_t m, int64_t n, int64_t c, int64_t heads) {
    LayerCounts lc;
    // self round
    lc.projections += 3 * (linear_flops(m, c, c) + linear_flops(n, c, c));
    add_attention(lc, m, m, c, heads, true);
    add_attention(lc, n, n, c, heads, true);
    lc.fusion += mlp2_flops(m, 2 * c, 2 * c, c) + m * c;
    lc.fusion += mlp2_flops(n, 2 * c, 2 * c, c) + n * c;
    // cross round
    lc.projections += 3 * (linear_flops(m, c, c) + linear_flops(n, c, c));
    add_attention(lc, m, n, c, heads, true);
    add_attention(lc, n, m, c, heads, true);
    lc.fusion += mlp2_flops(m, 2 * c, 2 * c, c) + m * c;
    lc.fusion += mlp2_flops(n, 2 * c, 2 * c, c) + n * c;
    return lc;
}

int64_t pe_flops(PeKind pe, int64_t rows, int64_t c) {
    switch (pe) {
        case PeKind::Wave:
            // amp, phase, cos/sin, two gates, fuse, residual
            return mlp2_flops(rows, c, c, c) + mlp2_flops(rows, 3, c, c) + 4 * rows * c +
                   mlp2_flops(rows, 2 * c, 2 * c, c) + rows * c;
        case PeKind::Mlp: {
            int64_t f = linear_flops(rows, 3, 32) + rows * 32;
            f += linear_flops(rows, 32, 64) + rows * 64;
            f += linear_flops(rows, 64, 128) + rows * 128;
            f += linear_flops(rows, 128, c);
            return f + rows * c;  // residual
        }
        case PeKind::None:
            return 0;
    }
    return 0;
}

int64_t pool_flops(PoolKind kind, int64_t n_prev, int64_t k, int64_t c_in, int64_t c_out, int64_t heads) {
    int64_t f = 0;
    switch (kind) {
        case PoolKind::Attentional:
            f += heads * n_prev * n_prev;  // average maps over heads
            f += n_prev * n_prev;          // column sums
            f += k + k * c_out;            // sigmoid gate + gating product
            break;
        case PoolKind::GPool:
            f += 3 * c_in;                 // normalize w
            f += matmul_flops(n_prev, c_in, 1);
            f += k + k * c_out;
            break;
        case PoolKind::Random:
            break;
    }
    f += linear_flops(k, c_in, c_out);
    return f;
}

int64_t sinkhorn_flops(int64_t m, int64_t n, int64_t iters) {
    const int64_t e = (m + 1) * (n + 1);
    // per iteration: one row pass and one column pass (broadcast add + lse),
    // plus the potential updates; final log_p assembly adds two broadcasts
    return iters * (12 * e + m + n + 2) + 2 * e;
}

int64_t half_count(int64_t n) { return (n + 1) / 2; }

}  // namespace

FlopsBreakdown count_flops(const ModelConfig& cfg, int64_t m, int64_t n) {
    cfg.validate();
    if (m < 0 || n < 0) throw ContractError("count_flops: negative point count");
    FlopsBreakdown f;
    if (m == 0 || n == 0) return f;

    const int64_t c = cfg.dim;
    f.pe = pe_flops(cfg.pe, m, c) + pe_flops(cfg.pe, n, c);

    auto add_layer = [&f](const LayerCounts& lc, int64_t times) {
        f.projections += lc.projections * times;
        f.attn_logits += lc.logits * times;
        f.attn_values += lc.values * times;
        f.fusion += lc.fusion * times;
    };

    int64_t out_dim = c;
    switch (cfg.variant) {
        case Variant::ParaFormer:
            add_layer(parallel_layer_flops(m, n, c, cfg.heads, cfg.share_qkv, cfg.share_attn_weights), cfg.layers);
            break;
        case Variant::SerialBaseline:
            add_layer(serial_pair_flops(m, n, c, cfg.heads), cfg.layers);
            break;
        case Variant::ParaFormerU: {
            const auto& dims = cfg.stages.dims;
            const int64_t ms[5] = {m, half_count(m), half_count(half_count(m)), half_count(m), m};
            const int64_t ns[5] = {n, half_count(n), half_count(half_count(n)), half_count(n), n};
            for (size_t s = 0; s < 5; ++s)
                add_layer(parallel_layer_flops(ms[s], ns[s], dims[s], cfg.heads, cfg.share_qkv, cfg.share_attn_weights),
                          cfg.stages.depths[s]);
            for (int i = 0; i < 2; ++i) {
                // pools after stages 0 and 1
                f.pooling += pool_flops(cfg.pool, ms[i], ms[i + 1], dims[static_cast<size_t>(i)],
                                        dims[static_cast<size_t>(i + 1)], cfg.heads);
                f.pooling += pool_flops(cfg.pool, ns[i], ns[i + 1], dims[static_cast<size_t>(i)],
                                        dims[static_cast<size_t>(i + 1)], cfg.heads);
                // unpools before stages 3 and 4, with the mirrored skip add
                const size_t src = static_cast<size_t>(2 + i);
                const int64_t restored_m = ms[src + 1], restored_n = ns[src + 1];
                f.pooling += linear_flops(ms[src], dims[src], dims[src + 1]) + restored_m * dims[src + 1];
                f.pooling += linear_flops(ns[src], dims[src], dims[src + 1]) + restored_n * dims[src + 1];
                if (dims[static_cast<size_t>(1 - i)] != dims[src + 1]) {
                    f.pooling += linear_flops(restored_m, dims[static_cast<size_t>(1 - i)], dims[src + 1]);
                    f.pooling += linear_flops(restored_n, dims[static_cast<size_t>(1 - i)], dims[src + 1]);
                }
            }
            out_dim = dims.back();
            break;
        }
    }

    f.projections += linear_flops(m, out_dim, out_dim) + linear_flops(n, out_dim, out_dim);  // final projection
    f.projections += matmul_flops(m, out_dim, n) + m * n;                                    // score matrix + scaling
    f.sinkhorn = sinkhorn_flops(m, n, cfg.sinkhorn_iters);
    return f;
}

nlohmann::json FlopsBreakdown::to_json() const {
    return {{"pe", pe},
            {"projections", projections},
            {"attn_logits", attn_logits},
            {"attn_values", attn_values},
            {"fusion", fusion},
            {"pooling", pooling},
            {"sinkhorn", sinkhorn},
            {"total", total()}};
}

}  // namespace paraformer
