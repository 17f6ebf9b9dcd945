#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "paraformer/errors.hpp"

namespace paraformer {

enum class Variant { ParaFormer, ParaFormerU, SerialBaseline };
enum class PeKind { Wave, Mlp, None };
enum class PoolKind { Attentional, GPool, Random };

// Encoder/decoder layout of the U variant. Stages run at point counts
// N, N/2, N/4, N/2, N: pooling sits between stages 1-2 and 2-3, unpooling
// (plus the mirrored skip connection) between stages 3-4 and 4-5.
struct StageConfig {
    std::vector<int> depths = {2, 1, 2, 1, 2};
    std::vector<int64_t> dims = {256, 384, 128, 384, 256};

    int total_layers() const;
    void validate(int heads) const;
};

struct ModelConfig {
    Variant variant = Variant::ParaFormer;
    int64_t dim = 256;  // descriptor / feature width C
    int layers = 9;     // parallel layers, or self+cross pairs for the serial baseline
    int heads = 4;
    PeKind pe = PeKind::Wave;
    bool share_qkv = true;
    bool share_merge = true;
    bool share_attn_weights = true;
    bool share_fusion = false;
    StageConfig stages;                      // U variant only
    PoolKind pool = PoolKind::Attentional;   // U variant only
    int sinkhorn_iters = 100;
    float match_threshold = 0.2f;
    uint64_t seed = 42;

    void validate() const;

    // Canonical "key = value" text (sorted keys), used for files and hashing.
    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);
    static ModelConfig from_file(const std::string& path);
    uint64_t hash() const;
};

std::string variant_name(Variant v);
std::string pe_name(PeKind k);
std::string pool_name(PoolKind k);

// Generic "key = value" line parser shared by model/train/data option texts.
// '#' starts a comment; unknown keys are the caller's problem.
std::map<std::string, std::string> parse_kv_text(const std::string& text);

}  // namespace paraformer
