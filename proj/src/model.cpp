#include "paraformer/model.hpp"

#include <cmath>

#include "paraformer/serialize.hpp"

namespace paraformer {

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.seed);

    const int64_t dim = cfg_.dim;
    switch (cfg_.pe) {
        case PeKind::Wave:
            wave_pe_ = make_wave_pe(params_, "pe.wave", dim, rng);
            break;
        case PeKind::Mlp:
            mlp_pe_ = make_mlp_pe(params_, "pe.mlp", dim, rng);
            break;
        case PeKind::None:
            break;
    }

    switch (cfg_.variant) {
        case Variant::ParaFormer:
            for (int l = 0; l < cfg_.layers; ++l)
                layers_.push_back(make_attn_layer(params_, "layers." + std::to_string(l), dim, cfg_.heads, cfg_.share_qkv,
                                                  cfg_.share_merge, cfg_.share_attn_weights, cfg_.share_fusion, rng));
            break;
        case Variant::SerialBaseline:
            for (int l = 0; l < cfg_.layers; ++l)
                serial_.push_back(make_serial_pair(params_, "pairs." + std::to_string(l), dim, cfg_.heads, rng));
            break;
        case Variant::ParaFormerU:
            unet_ = make_unet(params_, "unet", cfg_, rng);
            break;
    }

    const int64_t out_dim = cfg_.variant == Variant::ParaFormerU ? cfg_.stages.dims.back() : dim;
    final_proj_ = make_linear(params_, "final_proj", out_dim, out_dim, rng, Init::Zero);
    // scaled-identity start; gain 4*C^(1/4) puts the initial score scale
    // g^2/sqrt(C) inside the Sinkhorn head's operating range
    const float gain = 4.0f * std::pow(static_cast<float>(out_dim), 0.25f);
    const float jitter = 0.05f * std::sqrt(6.0f / static_cast<float>(2 * out_dim));
    for (int64_t i = 0; i < out_dim; ++i) {
        for (int64_t j = 0; j < out_dim; ++j) final_proj_.w->at(i, j) = rng.uniform_f(-jitter, jitter);
        final_proj_.w->at(i, i) += gain;
    }
    alpha_ = params_.add("matcher.alpha", Tensor::scalar(1.0f, true));
}

int Model::parallel_layer_count() const {
    if (cfg_.variant == Variant::ParaFormerU) return cfg_.stages.total_layers();
    if (cfg_.variant == Variant::ParaFormer) return cfg_.layers;
    return 0;
}

TensorPtr Model::encode(Tape* tape, const KeypointSet& kp) const {
    if (kp.descriptor_dim() != cfg_.dim)
        throw ConfigError("descriptor dim " + std::to_string(kp.descriptor_dim()) + " does not match model dim " +
                          std::to_string(cfg_.dim));
    switch (cfg_.pe) {
        case PeKind::Wave: return wave_encode(tape, kp, *wave_pe_);
        case PeKind::Mlp: return mlp_encode(tape, kp, *mlp_pe_);
        case PeKind::None: return kp.descriptors;
    }
    throw ConfigError("unknown pe kind");
}

ForwardResult Model::forward(Tape* tape, const KeypointSet& kx, const KeypointSet& ky, const ForwardOptions& opts) const {
    if (kx.count() < 1 || ky.count() < 1) throw ContractError("forward: empty keypoint set");
    if (cfg_.variant == Variant::ParaFormerU && (kx.count() < 4 || ky.count() < 4))
        throw ContractError("forward: the U variant needs at least 4 points per image");

    ForwardResult res;
    TensorPtr x = encode(tape, kx);
    TensorPtr y = encode(tape, ky);

    switch (cfg_.variant) {
        case Variant::ParaFormer: {
            res.diag.x_stage_counts = {kx.count()};
            res.diag.y_stage_counts = {ky.count()};
            for (const auto& layer : layers_) {
                auto lo = parallel_layer(tape, x, y, layer, opts.want_maps);
                x = lo.x;
                y = lo.y;
                if (opts.want_maps) res.diag.layer_maps.push_back(std::move(lo.maps));
            }
            break;
        }
        case Variant::SerialBaseline: {
            res.diag.x_stage_counts = {kx.count()};
            res.diag.y_stage_counts = {ky.count()};
            for (const auto& pair : serial_) {
                auto lo = serial_layer_pair(tape, x, y, pair);
                x = lo.x;
                y = lo.y;
            }
            break;
        }
        case Variant::ParaFormerU: {
            auto uo = unet_forward(tape, x, y, *unet_);
            x = uo.x;
            y = uo.y;
            res.diag.x_stage_counts = uo.diag.x_counts;
            res.diag.y_stage_counts = uo.diag.y_counts;
            break;
        }
    }

    res.x_out = final_proj_.apply(tape, x);
    res.y_out = final_proj_.apply(tape, y);

    auto scores = score_matrix(tape, res.x_out, res.y_out);
    res.assignment = sinkhorn(tape, scores, alpha_, opts.sinkhorn_iters.value_or(cfg_.sinkhorn_iters));
    if (opts.extract) res.matches = extract_matches(res.assignment, opts.threshold.value_or(cfg_.match_threshold));
    return res;
}

namespace {
constexpr const char* kWeightsMagic = "PFWB";
}

void Model::save(const std::string& path, const nlohmann::json* extra) const {
    BlobWriter blob;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, t] : params_.entries()) tensors.push_back(blob.add(name, *t));
    nlohmann::json manifest;
    manifest["format"] = "paraformer-weights";
    manifest["version"] = 1;
    manifest["config"] = cfg_.to_text();
    manifest["config_hash"] = hash_hex(cfg_.hash());
    manifest["dtype"] = "f32le";
    manifest["param_count"] = param_count();
    manifest["tensors"] = tensors;
    manifest["blob_nbytes"] = blob.byte_size();
    if (extra != nullptr) manifest["extra"] = *extra;
    write_container(path, kWeightsMagic, manifest, blob.blob());
}

std::unique_ptr<Model> Model::load(const std::string& path, nlohmann::json* extra_out) {
    auto c = read_container(path, kWeightsMagic);
    if (c.manifest.value("format", "") != "paraformer-weights") throw IoError("not a weights file: " + path);
    auto model = std::make_unique<Model>(ModelConfig::from_text(c.manifest.at("config").get<std::string>()));
    model->fill_from(c, path, extra_out);
    return model;
}

void Model::fill_from(const Container& c, const std::string& path, nlohmann::json* extra_out) {
    const auto& tensors = c.manifest.at("tensors");
    if (tensors.size() != params_.size())
        throw IoError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                      std::to_string(params_.size()));
    BlobReader reader(c.blob);
    for (const auto& entry : tensors) {
        const std::string name = entry.at("name").get<std::string>();
        if (!params_.has(name)) throw IoError("checkpoint tensor " + name + " unknown to this model (" + path + ")");
        auto loaded = reader.read(entry);
        auto& dst = *params_.get(name);
        if (loaded->shape != dst.shape)
            throw IoError("checkpoint tensor " + name + " has shape " + loaded->shape_str() + ", expected " +
                          dst.shape_str());
        dst.data = loaded->data;
    }
    if (extra_out != nullptr) *extra_out = c.manifest.value("extra", nlohmann::json::object());
}

void Model::load_weights(const std::string& path, nlohmann::json* extra_out) {
    auto c = read_container(path, kWeightsMagic);
    if (c.manifest.value("format", "") != "paraformer-weights") throw IoError("not a weights file: " + path);
    const std::string want = hash_hex(cfg_.hash());
    const std::string got = c.manifest.value("config_hash", "");
    if (want != got)
        throw ConfigError("incompatible checkpoint: config hash " + got + " does not match model config " + want);
    fill_from(c, path, extra_out);
}

}  // namespace paraformer
