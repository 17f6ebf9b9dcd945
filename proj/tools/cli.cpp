// paraformer command-line tool. Links the C API only; all heavy lifting
// happens inside libparaformer.
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "paraformer/capi.h"

using nlohmann::json;

namespace {

// exit codes: 0 ok, 1 usage, 2 contract violation, 3 numeric failure
int exit_code(pf_status_t s) {
    switch (s) {
        case PF_OK: return 0;
        case PF_ERROR_USAGE: return 1;
        case PF_ERROR_NUMERIC: return 3;
        case PF_ERROR_CONTRACT:
        case PF_ERROR_IO:
        default: return 2;
    }
}

[[noreturn]] void die(pf_status_t s) {
    std::cerr << "error: " << pf_last_error() << std::endl;
    std::exit(exit_code(s));
}

void check(pf_status_t s) {
    if (s != PF_OK) die(s);
}

std::string take_string(char* s) {
    std::string out = s == nullptr ? "" : s;
    pf_string_free(s);
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "error: cannot open " << path << std::endl;
        std::exit(2);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        std::cerr << "error: cannot write " << path << std::endl;
        std::exit(2);
    }
    out << text;
}

uint64_t default_seed() {
    const char* env = std::getenv("PARAFORMER_SEED");
    if (env != nullptr && *env != '\0') return std::strtoull(env, nullptr, 10);
    return 42;
}

// config layering: file, then environment, then explicit flag overrides
// (later lines win for a repeated key)
std::string layer_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    std::string text = config_path.empty() ? "" : read_file(config_path);
    if (const char* env = std::getenv("PARAFORMER_SEED"); env != nullptr && *env != '\0')
        text += std::string("\nseed = ") + env;
    for (const auto& kv : overrides) text += "\n" + kv;
    text += "\n";
    return text;
}

struct ModelGuard {
    pf_model_t* m = nullptr;
    ~ModelGuard() { pf_model_free(m); }
};
struct DatasetGuard {
    pf_dataset_t* d = nullptr;
    ~DatasetGuard() { pf_dataset_free(d); }
};

uint64_t fnv1a_text(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "";
    std::ostringstream ss;
    ss << in.rdbuf();
    return hex64(fnv1a_text(ss.str()));
}

std::string iso_now() {
    const std::time_t t = std::time(nullptr);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void print_metrics_block(const json& m, const std::string& label) {
    std::printf("%-14s precision %.4f  recall %.4f  f1 %.4f  auc@10 %.4f  (tp %lld fp %lld fn %lld)%s\n",
                label.c_str(), m.at("precision").get<double>(), m.at("recall").get<double>(),
                m.at("f1").get<double>(), m.at("auc10").get<double>(), m.at("tp").get<long long>(),
                m.at("fp").get<long long>(), m.at("fn").get<long long>(),
                m.value("empty_matches", false) ? "  [empty pairs]" : "");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ParaFormer sparse feature matcher"};
    app.require_subcommand(1);

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic homography dataset");
    int64_t g_pairs = 100, g_keypoints = 512, g_width = 640, g_height = 480, g_dim = 256;
    double g_noise = 0.2, g_distractors = 0.25, g_jitter = 0.5;
    uint64_t g_seed = default_seed();
    std::string g_out;
    gen->add_option("--pairs", g_pairs, "Number of image pairs");
    gen->add_option("--keypoints", g_keypoints, "Keypoints per image");
    gen->add_option("--image-width", g_width, "Image width in px");
    gen->add_option("--image-height", g_height, "Image height in px");
    gen->add_option("--dim", g_dim, "Descriptor dimension");
    gen->add_option("--noise", g_noise, "Descriptor noise sigma");
    gen->add_option("--distractors", g_distractors, "Distractor fraction in image Y");
    gen->add_option("--position-jitter", g_jitter, "Position noise radius in px");
    gen->add_option("--seed", g_seed, "Random seed (default: PARAFORMER_SEED or 42)");
    gen->add_option("--out", g_out, "Output dataset path")->required();

    // ---- train ----
    auto* tr = app.add_subcommand("train", "Train a model on a dataset");
    std::string t_config, t_data, t_out, t_resume;
    std::vector<std::string> t_set;
    int t_epochs = 10, t_warmup = 1;
    double t_lr = 0.0001, t_wd = 0.0;
    uint64_t t_shuffle_seed = 7;
    tr->add_option("--config", t_config, "Model config file");
    tr->add_option("--set", t_set, "Config overrides, key=value");
    tr->add_option("--data", t_data, "Training dataset")->required();
    tr->add_option("--epochs", t_epochs, "Training epochs");
    tr->add_option("--lr", t_lr, "Initial learning rate");
    tr->add_option("--warmup", t_warmup, "Linear warm-up epochs");
    tr->add_option("--weight-decay", t_wd, "AdamW weight decay");
    tr->add_option("--shuffle-seed", t_shuffle_seed, "Epoch shuffle seed");
    tr->add_option("--resume", t_resume, "Resume from a .last checkpoint");
    tr->add_option("--out", t_out, "Best checkpoint path")->required();

    // ---- match ----
    auto* mt = app.add_subcommand("match", "Match pairs of a dataset with a trained model");
    std::string m_model, m_data, m_out;
    double m_threshold = -1.0;
    mt->add_option("--model", m_model, "Checkpoint path")->required();
    mt->add_option("--data", m_data, "Dataset path")->required();
    mt->add_option("--threshold", m_threshold, "Match confidence threshold (default: model config)");
    mt->add_option("--out", m_out, "Write matches JSON here");

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "Evaluate a model (and NN baselines) on a dataset");
    std::string e_model, e_data, e_out;
    bool e_nn = false, e_nn_mutual = false;
    ev->add_option("--model", e_model, "Checkpoint path (omit to evaluate baselines only)");
    ev->add_option("--data", e_data, "Dataset path")->required();
    ev->add_flag("--nn", e_nn, "Also evaluate the NN baseline");
    ev->add_flag("--nn-mutual", e_nn_mutual, "Also evaluate the NN + mutual check baseline");
    ev->add_option("--out", e_out, "Write the full report JSON here");

    // ---- flops ----
    auto* fl = app.add_subcommand("flops", "Analytic flops of the model family");
    std::string f_config, f_csv;
    std::vector<int64_t> f_keypoints = {512, 1024, 2048};
    bool f_params = false;
    fl->add_option("--config", f_config, "Model config file (default: paper-scale models)");
    fl->add_option("--keypoints", f_keypoints, "Keypoint counts to sweep");
    fl->add_option("--csv", f_csv, "Write delimiter-separated records here");
    fl->add_flag("--params", f_params, "Also print the weight-sharing parameter count table");

    // ---- gradcheck ----
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every op and the toy model");
    int gc_seeds = 10;
    double gc_op_tol = 1e-3, gc_model_tol = 1e-3;
    gc->add_option("--seeds", gc_seeds, "Seeds per suite");
    gc->add_option("--op-tol", gc_op_tol, "Per-op relative tolerance");
    gc->add_option("--model-tol", gc_model_tol, "Whole-model relative tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // every usage problem exits 1
    }

    if (gen->parsed()) {
        std::ostringstream opts;
        opts << "pairs = " << g_pairs << "\nkeypoints = " << g_keypoints << "\nimage_width = " << g_width
             << "\nimage_height = " << g_height << "\ndim = " << g_dim << "\nnoise = " << g_noise
             << "\ndistractors = " << g_distractors << "\nposition_jitter = " << g_jitter << "\nseed = " << g_seed
             << "\n";
        DatasetGuard ds;
        check(pf_dataset_generate(opts.str().c_str(), &ds.d));
        check(pf_dataset_save(ds.d, g_out.c_str()));
        char* info = nullptr;
        check(pf_dataset_info(ds.d, &info));
        const json j = json::parse(take_string(info));
        int64_t min_gt = INT64_MAX, max_n = 0;
        for (const auto& p : j.at("pairs")) {
            min_gt = std::min(min_gt, p.at("gt_matches").get<int64_t>());
            max_n = std::max(max_n, p.at("n").get<int64_t>());
        }
        std::printf("wrote %s: %lld pairs, %lld keypoints (dim %lld), min gt matches %lld, max N %lld\n", g_out.c_str(),
                    static_cast<long long>(j.at("count").get<int64_t>()), static_cast<long long>(g_keypoints),
                    static_cast<long long>(g_dim), static_cast<long long>(min_gt), static_cast<long long>(max_n));
        return 0;
    }

    if (tr->parsed()) {
        ModelGuard model;
        DatasetGuard data;
        check(pf_dataset_load(t_data.c_str(), &data.d));
        const std::string cfg_text = layer_config(t_config, t_set);
        check(pf_model_create(cfg_text.c_str(), &model.m));

        std::ostringstream opts;
        opts << "epochs = " << t_epochs << "\nlr = " << t_lr << "\nwarmup_epochs = " << t_warmup
             << "\nweight_decay = " << t_wd << "\nshuffle_seed = " << t_shuffle_seed << "\ncheckpoint_best = " << t_out
             << "\ncheckpoint_last = " << t_out << ".last\n";
        if (!t_resume.empty()) opts << "resume = " << t_resume << "\n";

        auto cb = [](int64_t epoch, double loss, double lr, void*) {
            std::printf("epoch %3lld  loss %.6f  lr %.6g\n", static_cast<long long>(epoch), loss, lr);
            std::fflush(stdout);
        };
        char* out_json = nullptr;
        check(pf_train(model.m, data.d, opts.str().c_str(), cb, nullptr, &out_json));
        const json report = json::parse(take_string(out_json));

        char* cfg_resolved = nullptr;
        check(pf_model_config_text(model.m, &cfg_resolved));
        json manifest;
        manifest["config"] = take_string(cfg_resolved);
        manifest["seed"] = t_shuffle_seed;
        manifest["data"] = {{"path", t_data}, {"hash", file_hash(t_data)}};
        manifest["weights_hash"] = file_hash(t_out);
        manifest["epochs"] = report.at("epochs");
        manifest["finished"] = iso_now();
        manifest["run_hash"] = hex64(fnv1a_text(manifest.dump()));
        write_file(t_out + ".manifest.json", manifest.dump(2) + "\n");

        std::printf("best epoch %lld (loss %.6f) -> %s\n", report.at("best_epoch").get<long long>(),
                    report.at("best_loss").get<double>(), t_out.c_str());
        return 0;
    }

    if (mt->parsed()) {
        ModelGuard model;
        DatasetGuard data;
        check(pf_model_load(m_model.c_str(), &model.m));
        check(pf_dataset_load(m_data.c_str(), &data.d));
        const int64_t pairs = pf_dataset_num_pairs(data.d);
        json out = json::array();
        int64_t total = 0;
        for (int64_t p = 0; p < pairs; ++p) {
            pf_match_t* matches = nullptr;
            int64_t count = 0;
            check(pf_match_pair(model.m, data.d, p, static_cast<float>(m_threshold), &matches, &count));
            json rec = json::array();
            for (int64_t k = 0; k < count; ++k)
                rec.push_back({{"i", matches[k].i}, {"j", matches[k].j}, {"confidence", matches[k].confidence}});
            pf_matches_free(matches);
            out.push_back({{"pair", p}, {"matches", rec}});
            total += count;
            std::printf("pair %lld: %lld matches\n", static_cast<long long>(p), static_cast<long long>(count));
        }
        std::printf("total %lld matches over %lld pairs\n", static_cast<long long>(total), static_cast<long long>(pairs));
        if (!m_out.empty()) write_file(m_out, out.dump(2) + "\n");
        return 0;
    }

    if (ev->parsed()) {
        DatasetGuard data;
        check(pf_dataset_load(e_data.c_str(), &data.d));
        json report;
        if (!e_model.empty()) {
            ModelGuard model;
            check(pf_model_load(e_model.c_str(), &model.m));
            char* out_json = nullptr;
            check(pf_evaluate(model.m, data.d, &out_json));
            report["model"] = json::parse(take_string(out_json));
            print_metrics_block(report["model"]["aggregate"], "model");
        }
        if (e_nn) {
            char* out_json = nullptr;
            check(pf_evaluate_nn(data.d, 0, &out_json));
            report["nn"] = json::parse(take_string(out_json));
            print_metrics_block(report["nn"]["aggregate"], "nn");
        }
        if (e_nn_mutual) {
            char* out_json = nullptr;
            check(pf_evaluate_nn(data.d, 1, &out_json));
            report["nn_mutual"] = json::parse(take_string(out_json));
            print_metrics_block(report["nn_mutual"]["aggregate"], "nn+mutual");
        }
        if (report.empty()) {
            std::cerr << "error: nothing to evaluate; give --model and/or --nn/--nn-mutual" << std::endl;
            return 1;
        }
        if (!e_out.empty()) write_file(e_out, report.dump(2) + "\n");
        return 0;
    }

    if (fl->parsed()) {
        struct Row {
            std::string name;
            std::string config;
        };
        std::vector<Row> rows;
        if (!f_config.empty()) {
            rows.push_back({"config", read_file(f_config)});
        } else {
            rows.push_back({"serial_baseline", "variant = serial_baseline\npe = mlp\n"});
            rows.push_back({"paraformer", "variant = paraformer\n"});
            rows.push_back({"paraformer_no_aws", "variant = paraformer\nshare_attn_weights = false\n"});
            rows.push_back({"paraformer_u", "variant = paraformer_u\n"});
        }
        std::ostringstream csv;
        csv << "model,keypoints,pe,projections,attn_logits,attn_values,fusion,pooling,sinkhorn,total\n";
        std::vector<std::vector<double>> totals(rows.size());
        std::printf("%-20s", "model");
        for (int64_t k : f_keypoints) std::printf("  %12lld", static_cast<long long>(k));
        std::printf("   (GFLOPs, 2mkn convention)\n");
        for (size_t r = 0; r < rows.size(); ++r) {
            std::printf("%-20s", rows[r].name.c_str());
            for (int64_t k : f_keypoints) {
                char* out_json = nullptr;
                check(pf_flops(rows[r].config.c_str(), k, k, &out_json));
                const json j = json::parse(take_string(out_json));
                const double total = j.at("total").get<double>();
                totals[r].push_back(total);
                std::printf("  %12.2f", total / 1e9);
                csv << rows[r].name << "," << k;
                for (const char* f : {"pe", "projections", "attn_logits", "attn_values", "fusion", "pooling", "sinkhorn", "total"})
                    csv << "," << j.at(f).get<int64_t>();
                csv << "\n";
            }
            std::printf("\n");
        }
        if (f_config.empty()) {
            std::printf("\nratios vs serial_baseline:\n");
            for (size_t r = 1; r < rows.size(); ++r) {
                std::printf("%-20s", rows[r].name.c_str());
                for (size_t k = 0; k < f_keypoints.size(); ++k) std::printf("  %12.3f", totals[r][k] / totals[0][k]);
                std::printf("\n");
            }
            std::printf("%-20s", "aws on/off");
            for (size_t k = 0; k < f_keypoints.size(); ++k) std::printf("  %12.3f", totals[1][k] / totals[2][k]);
            std::printf("\n");
        }
        if (f_params) {
            std::printf("\nweight sharing vs parameter count (paper scale, C=256, L=9):\n");
            const std::vector<std::pair<std::string, std::string>> combos = {
                {"no sharing", "share_qkv = false\nshare_merge = false\n"},
                {"share qkv", "share_qkv = true\nshare_merge = false\n"},
                {"share merge", "share_qkv = false\nshare_merge = true\n"},
                {"share qkv+merge", "share_qkv = true\nshare_merge = true\n"},
            };
            for (const auto& [name, extra] : combos) {
                ModelGuard m2;
                check(pf_model_create(("variant = paraformer\n" + extra).c_str(), &m2.m));
                std::printf("%-18s %10.3f M params\n", name.c_str(),
                            static_cast<double>(pf_model_param_count(m2.m)) / 1e6);
            }
        }
        if (!f_csv.empty()) write_file(f_csv, csv.str());
        return 0;
    }

    if (gc->parsed()) {
        std::ostringstream opts;
        opts << "seeds = " << gc_seeds << "\nop_tol = " << gc_op_tol << "\nmodel_tol = " << gc_model_tol << "\n";
        char* out_json = nullptr;
        const pf_status_t s = pf_gradcheck(opts.str().c_str(), &out_json);
        if (out_json != nullptr) {
            const json j = json::parse(take_string(out_json));
            for (const auto& c : j.at("checks"))
                std::printf("%-18s max rel err %.3e  checked %6lld  skipped %lld  %s\n",
                            c.at("name").get<std::string>().c_str(), c.at("max_rel_err").get<double>(),
                            c.at("checked").get<long long>(), c.at("skipped").get<long long>(),
                            c.at("pass").get<bool>() ? "pass" : "FAIL");
            std::printf("gradcheck: %s\n", j.at("pass").get<bool>() ? "PASS" : "FAIL");
        }
        if (s != PF_OK) die(s);
        return 0;
    }

    return 1;
}
