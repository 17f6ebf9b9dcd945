#pragma once

#include <memory>
#include <optional>
#include <string>

#include "paraformer/attention.hpp"
#include "paraformer/config.hpp"
#include "paraformer/keypoints.hpp"
#include "paraformer/matcher.hpp"
#include "paraformer/serialize.hpp"
#include "paraformer/unet.hpp"
#include "paraformer/wave_pe.hpp"

namespace paraformer {

struct ForwardOptions {
    bool want_maps = false;          // retain per-layer attention maps
    bool extract = true;             // run match extraction
    std::optional<float> threshold;  // override the config match threshold
    std::optional<int> sinkhorn_iters;
};

struct ForwardDiagnostics {
    std::vector<int64_t> x_stage_counts;
    std::vector<int64_t> y_stage_counts;
    std::vector<AttentionMaps> layer_maps;  // when want_maps
};

struct ForwardResult {
    TensorPtr x_out;  // [M x C] enhanced descriptors after the final projection
    TensorPtr y_out;
    Assignment assignment;
    MatchSet matches;
    ForwardDiagnostics diag;
};

// ParaFormer family model: position encoder, attention stack (stacked
// parallel layers, U-shaped stack, or serial baseline), final projection
// and the Sinkhorn matching head.
class Model {
public:
    // Deterministic build: same (config, config.seed) gives bit-identical params.
    explicit Model(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    int64_t param_count() const { return params_.total_elements(); }
    int parallel_layer_count() const;

    ForwardResult forward(Tape* tape, const KeypointSet& kx, const KeypointSet& ky,
                          const ForwardOptions& opts = {}) const;

    // Weight checkpoint: manifest(JSON) + f32 blob, bit-exact round trip.
    // extra, when given, is stored under manifest["extra"] (optimizer state).
    void save(const std::string& path, const nlohmann::json* extra = nullptr) const;
    // Builds the model from the config embedded in the checkpoint.
    static std::unique_ptr<Model> load(const std::string& path, nlohmann::json* extra_out = nullptr);
    // Loads weights into this model; refuses checkpoints of other configs.
    void load_weights(const std::string& path, nlohmann::json* extra_out = nullptr);

private:
    void fill_from(const Container& c, const std::string& path, nlohmann::json* extra_out);

    ModelConfig cfg_;
    ParamStore params_;

    std::optional<WavePeParams> wave_pe_;
    std::optional<MlpPeParams> mlp_pe_;
    std::vector<AttnLayerParams> layers_;       // paraformer
    std::vector<SerialPairParams> serial_;      // serial baseline
    std::optional<UnetParams> unet_;            // paraformer_u
    Linear final_proj_;
    TensorPtr alpha_;  // learnable dustbin score

    TensorPtr encode(Tape* tape, const KeypointSet& kp) const;
};

}  // namespace paraformer
