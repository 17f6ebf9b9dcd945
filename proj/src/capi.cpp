#include "paraformer/capi.h"

#include <cstring>
#include <string>

#include "paraformer/evaluation.hpp"
#include "paraformer/model.hpp"
#include "paraformer/synthetic.hpp"
#include "paraformer/train.hpp"

using namespace paraformer;

struct pf_model_t {
    std::unique_ptr<Model> model;
};

struct pf_dataset_t {
    Dataset data;
};

namespace {

thread_local std::string g_last_error;

pf_status_t fail(pf_status_t code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

// Maps the C++ error taxonomy onto C status codes.
template <typename Fn>
pf_status_t guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return PF_OK;
    } catch (const ConfigError& e) {
        return fail(PF_ERROR_CONTRACT, e.what());
    } catch (const ContractError& e) {
        return fail(PF_ERROR_CONTRACT, e.what());
    } catch (const NumericError& e) {
        return fail(PF_ERROR_NUMERIC, e.what());
    } catch (const IoError& e) {
        return fail(PF_ERROR_IO, e.what());
    } catch (const std::exception& e) {
        return fail(PF_ERROR_CONTRACT, e.what());
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::string get_or(const std::map<std::string, std::string>& kv, const std::string& key, const std::string& dflt) {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : it->second;
}

int64_t get_i64(const std::map<std::string, std::string>& kv, const std::string& key, int64_t dflt) {
    auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    return std::stoll(it->second);
}

double get_f64(const std::map<std::string, std::string>& kv, const std::string& key, double dflt) {
    auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    return std::stod(it->second);
}

nlohmann::json eval_to_json(const std::vector<MetricsReport>& per_pair) {
    nlohmann::json out;
    out["aggregate"] = aggregate_metrics(per_pair).to_json();
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& r : per_pair) pairs.push_back(r.to_json());
    out["pairs"] = std::move(pairs);
    return out;
}

}  // namespace

extern "C" {

const char* pf_version(void) { return "0.1.0"; }

const char* pf_last_error(void) { return g_last_error.c_str(); }

void pf_string_free(char* s) { delete[] s; }

pf_status_t pf_model_create(const char* config_text, pf_model_t** out_model) {
    if (out_model == nullptr) return fail(PF_ERROR_USAGE, "out_model is null");
    return guarded([&] {
        auto cfg = ModelConfig::from_text(config_text == nullptr ? "" : config_text);
        *out_model = new pf_model_t{std::make_unique<Model>(cfg)};
    });
}

pf_status_t pf_model_load(const char* path, pf_model_t** out_model) {
    if (path == nullptr || out_model == nullptr) return fail(PF_ERROR_USAGE, "null argument");
    return guarded([&] { *out_model = new pf_model_t{Model::load(path)}; });
}

pf_status_t pf_model_save(const pf_model_t* model, const char* path) {
    if (model == nullptr || path == nullptr) return fail(PF_ERROR_USAGE, "null argument");
    return guarded([&] { model->model->save(path); });
}

void pf_model_free(pf_model_t* model) { delete model; }

int64_t pf_model_param_count(const pf_model_t* model) { return model == nullptr ? -1 : model->model->param_count(); }

pf_status_t pf_model_config_text(const pf_model_t* model, char** out_text) {
    if (model == nullptr || out_text == nullptr) return fail(PF_ERROR_USAGE, "null argument");
    return guarded([&] { *out_text = dup_string(model->model->config().to_text()); });
}

pf_status_t pf_dataset_generate(const char* options_text, pf_dataset_t** out_dataset) {
    if (out_dataset == nullptr) return fail(PF_ERROR_USAGE, "out_dataset is null");
    return guarded([&] {
        const auto kv = parse_kv_text(options_text == nullptr ? "" : options_text);
        PairGenOptions gen;
        gen.n_keypoints = get_i64(kv, "keypoints", gen.n_keypoints);
        gen.image_width = get_i64(kv, "image_width", gen.image_width);
        gen.image_height = get_i64(kv, "image_height", gen.image_height);
        gen.descriptor_dim = get_i64(kv, "dim", gen.descriptor_dim);
        gen.noise_sigma = static_cast<float>(get_f64(kv, "noise", gen.noise_sigma));
        gen.distractor_frac = static_cast<float>(get_f64(kv, "distractors", gen.distractor_frac));
        gen.position_jitter = static_cast<float>(get_f64(kv, "position_jitter", gen.position_jitter));
        const int64_t pairs = get_i64(kv, "pairs", 100);
        const uint64_t seed = static_cast<uint64_t>(get_i64(kv, "seed", 42));
        *out_dataset = new pf_dataset_t{generate_dataset(pairs, gen, seed)};
    });
}

pf_status_t pf_dataset_load(const char* path, pf_dataset_t** out_dataset) {
    if (path == nullptr || out_dataset == nullptr) return fail(PF_ERROR_USAGE, "null argument");
    return guarded([&] { *out_dataset = new pf_dataset_t{Dataset::load(path)}; });
}

pf_status_t pf_dataset_save(const pf_dataset_t* dataset, const char* path) {
    if (dataset == nullptr || path == nullptr) return fail(PF_ERROR_USAGE, "null argument");
    return guarded([&] { dataset->data.save(path); });
}

int64_t pf_dataset_num_pairs(const pf_dataset_t* dataset) {
    return dataset == nullptr ? -1 : static_cast<int64_t>(dataset->data.pairs.size());
}

pf_status_t pf_dataset_info(const pf_dataset_t* dataset, char** out_json) {
    if (dataset == nullptr || out_json == nullptr) return fail(PF_ERROR_USAGE, "null argument");
    return guarded([&] {
        nlohmann::json pairs = nlohmann::json::array();
        for (const auto& p : dataset->data.pairs) {
            pairs.push_back({{"m", p.x.count()},
                             {"n", p.y.count()},
                             {"gt_matches", p.gt.matches.size()},
                             {"unmatched_x", p.gt.unmatched_x.size()},
                             {"unmatched_y", p.gt.unmatched_y.size()}});
        }
        nlohmann::json j;
        j["pairs"] = std::move(pairs);
        j["count"] = dataset->data.pairs.size();
        j["descriptor_dim"] = dataset->data.gen.descriptor_dim;
        j["seed"] = dataset->data.seed;
        *out_json = dup_string(j.dump());
    });
}

void pf_dataset_free(pf_dataset_t* dataset) { delete dataset; }

pf_status_t pf_match_pair(const pf_model_t* model, const pf_dataset_t* dataset, int64_t pair_index, float threshold,
                          pf_match_t** out_matches, int64_t* out_count) {
    if (model == nullptr || dataset == nullptr || out_matches == nullptr || out_count == nullptr)
        return fail(PF_ERROR_USAGE, "null argument");
    return guarded([&] {
        if (pair_index < 0 || pair_index >= static_cast<int64_t>(dataset->data.pairs.size()))
            throw IndexError("pair index " + std::to_string(pair_index));
        const auto& sample = dataset->data.pairs[static_cast<size_t>(pair_index)];
        ForwardOptions opts;
        if (threshold >= 0.0f) opts.threshold = threshold;
        auto res = model->model->forward(nullptr, sample.x, sample.y, opts);
        *out_count = static_cast<int64_t>(res.matches.size());
        *out_matches = new pf_match_t[res.matches.size() + 1];
        for (size_t k = 0; k < res.matches.size(); ++k)
            (*out_matches)[k] = {static_cast<int32_t>(res.matches[k].i), static_cast<int32_t>(res.matches[k].j),
                                 res.matches[k].confidence};
    });
}

void pf_matches_free(pf_match_t* matches) { delete[] matches; }

pf_status_t pf_evaluate(const pf_model_t* model, const pf_dataset_t* dataset, char** out_json) {
    if (model == nullptr || dataset == nullptr || out_json == nullptr) return fail(PF_ERROR_USAGE, "null argument");
    return guarded([&] {
        std::vector<MetricsReport> per_pair;
        for (const auto& sample : dataset->data.pairs) {
            auto res = model->model->forward(nullptr, sample.x, sample.y);
            per_pair.push_back(compute_metrics(res.matches, sample));
        }
        *out_json = dup_string(eval_to_json(per_pair).dump());
    });
}

pf_status_t pf_evaluate_nn(const pf_dataset_t* dataset, int mutual, char** out_json) {
    if (dataset == nullptr || out_json == nullptr) return fail(PF_ERROR_USAGE, "null argument");
    return guarded([&] {
        std::vector<MetricsReport> per_pair;
        for (const auto& sample : dataset->data.pairs) {
            auto matches = nn_baseline(sample.x, sample.y, mutual != 0);
            per_pair.push_back(compute_metrics(matches, sample));
        }
        *out_json = dup_string(eval_to_json(per_pair).dump());
    });
}

pf_status_t pf_train(pf_model_t* model, const pf_dataset_t* dataset, const char* options_text,
                     pf_train_callback_t callback, void* user, char** out_json) {
    if (model == nullptr || dataset == nullptr) return fail(PF_ERROR_USAGE, "null argument");
    return guarded([&] {
        const auto kv = parse_kv_text(options_text == nullptr ? "" : options_text);
        TrainOptions opts;
        opts.epochs = static_cast<int>(get_i64(kv, "epochs", opts.epochs));
        opts.lr = get_f64(kv, "lr", opts.lr);
        opts.warmup_epochs = static_cast<int>(get_i64(kv, "warmup_epochs", opts.warmup_epochs));
        opts.weight_decay = get_f64(kv, "weight_decay", opts.weight_decay);
        opts.shuffle_seed = static_cast<uint64_t>(get_i64(kv, "shuffle_seed", static_cast<int64_t>(opts.shuffle_seed)));
        if (kv.count("sinkhorn_iters")) opts.sinkhorn_iters = static_cast<int>(get_i64(kv, "sinkhorn_iters", 0));
        opts.checkpoint_best = get_or(kv, "checkpoint_best", "");
        opts.checkpoint_last = get_or(kv, "checkpoint_last", "");

        AdamW opt(model->model->params(), 0.9, 0.999, 1e-8, opts.weight_decay);
        const std::string resume = get_or(kv, "resume", "");
        if (!resume.empty()) {
            nlohmann::json extra;
            model->model->load_weights(resume, &extra);
            opt.load_state(resume + ".opt");
            opts.start_epoch = extra.at("epoch").get<int>() + 1;
        }

        struct CbCtx {
            pf_train_callback_t cb;
            void* user;
        } ctx{callback, user};
        EpochCallback ecb = nullptr;
        if (callback != nullptr)
            ecb = [&ctx](const EpochStats& es) { ctx.cb(es.epoch, es.mean_loss, es.lr, ctx.user); };

        auto report = train(*model->model, opt, dataset->data, opts, ecb);
        if (out_json != nullptr) {
            nlohmann::json j;
            nlohmann::json epochs = nlohmann::json::array();
            for (const auto& e : report.epochs) epochs.push_back({{"epoch", e.epoch}, {"loss", e.mean_loss}, {"lr", e.lr}});
            j["epochs"] = std::move(epochs);
            j["best_loss"] = report.best_loss;
            j["best_epoch"] = report.best_epoch;
            *out_json = dup_string(j.dump());
        }
    });
}

pf_status_t pf_flops(const char* config_text, int64_t m, int64_t n, char** out_json) {
    if (out_json == nullptr) return fail(PF_ERROR_USAGE, "out_json is null");
    return guarded([&] {
        auto cfg = ModelConfig::from_text(config_text == nullptr ? "" : config_text);
        *out_json = dup_string(count_flops(cfg, m, n).to_json().dump());
    });
}

pf_status_t pf_gradcheck(const char* options_text, char** out_json) {
    return guarded([&] {
        const auto kv = parse_kv_text(options_text == nullptr ? "" : options_text);
        const int seeds = static_cast<int>(get_i64(kv, "seeds", 10));
        const double op_tol = get_f64(kv, "op_tol", 1e-3);
        const double model_tol = get_f64(kv, "model_tol", 1e-3);
        auto results = gradcheck_suite(seeds, op_tol, model_tol);
        bool all_pass = true;
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : results) {
            all_pass = all_pass && r.pass;
            arr.push_back({{"name", r.name},
                           {"max_rel_err", r.max_rel_err},
                           {"checked", r.checked},
                           {"skipped", r.skipped},
                           {"pass", r.pass}});
        }
        nlohmann::json j;
        j["checks"] = std::move(arr);
        j["pass"] = all_pass;
        if (out_json != nullptr) *out_json = dup_string(j.dump());
        if (!all_pass) throw NumericError("gradient check failed");
    });
}

}  // extern "C"
