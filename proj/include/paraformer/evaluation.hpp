#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paraformer/config.hpp"
#include "paraformer/matcher.hpp"
#include "paraformer/synthetic.hpp"

#include <json.hpp>

namespace paraformer {

// Per-pair (or aggregated) matching quality. A match counts as correct when
// its reprojection error under the ground-truth homography is below the
// evaluation threshold.
struct MetricsReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double auc10 = 0.0;                // area under fraction-correct vs threshold, 0..10 px, /10
    std::vector<double> mma;           // thresholds 1..10 px
    int64_t tp = 0, fp = 0, fn = 0;
    bool empty_matches = false;        // precision undefined, reported as 0

    nlohmann::json to_json() const;
};

// correct_threshold is the reprojection tolerance for precision/recall/F1.
MetricsReport compute_metrics(const MatchSet& matches, const PairSample& sample, double correct_threshold = 3.0);

// Mean of the per-pair metrics (macro average) plus summed counts.
MetricsReport aggregate_metrics(const std::vector<MetricsReport>& reports);

// Nearest neighbor in descriptor space, optional mutual check.
MatchSet nn_baseline(const KeypointSet& kx, const KeypointSet& ky, bool mutual);

// ---- analytic flops model -------------------------------------------------
//
// Convention: a matmul [m x k][k x n] costs 2mkn (multiply + add); a linear
// layer adds mn bias adds; softmax and logsumexp cost 5 ops per element
// (max scan, subtract, exp, sum, normalize); other elementwise ops cost 1 op
// per element. Counts are exact integers under this convention.
struct FlopsBreakdown {
    int64_t pe = 0;
    int64_t projections = 0;    // QKV, head merging, final projection, score matrix
    int64_t attn_logits = 0;    // Q K^T products, scaling and softmax
    int64_t attn_values = 0;    // attention-map times V products
    int64_t fusion = 0;         // fusion / message MLPs
    int64_t pooling = 0;        // pooling scores, gates, pool/unpool/skip projections
    int64_t sinkhorn = 0;

    int64_t total() const { return pe + projections + attn_logits + attn_values + fusion + pooling + sinkhorn; }
    nlohmann::json to_json() const;
};

FlopsBreakdown count_flops(const ModelConfig& cfg, int64_t m, int64_t n);

}  // namespace paraformer
