#include "paraformer/train.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace paraformer {

AdamW::AdamW(ParamStore& params, double beta1, double beta2, double eps, double weight_decay)
    : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
    for (const auto& [name, t] : params_.entries()) {
        m_.emplace_back(t->data.size(), 0.0f);
        v_.emplace_back(t->data.size(), 0.0f);
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    size_t pi = 0;
    for (const auto& [name, t] : params_.entries()) {
        auto& m = m_[pi];
        auto& v = v_[pi];
        ++pi;
        if (!t->requires_grad || t->grad.empty()) continue;
        for (size_t i = 0; i < t->data.size(); ++i) {
            const double g = t->grad[i];
            m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g);
            v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            double x = t->data[i];
            x -= lr * weight_decay_ * x;  // decoupled decay
            x -= lr * mhat / (std::sqrt(vhat) + eps_);
            t->data[i] = static_cast<float>(x);
        }
    }
}

namespace {
constexpr const char* kOptMagic = "PFOP";
}

void AdamW::save_state(const std::string& path) const {
    BlobWriter blob;
    nlohmann::json tensors = nlohmann::json::array();
    for (size_t i = 0; i < m_.size(); ++i) {
        Tensor tm, tv;
        tm.shape = {static_cast<int64_t>(m_[i].size())};
        tm.data = m_[i];
        tv.shape = {static_cast<int64_t>(v_[i].size())};
        tv.data = v_[i];
        tensors.push_back(blob.add("m." + std::to_string(i), tm));
        tensors.push_back(blob.add("v." + std::to_string(i), tv));
    }
    nlohmann::json manifest;
    manifest["format"] = "paraformer-optimizer";
    manifest["t"] = t_;
    manifest["beta1"] = beta1_;
    manifest["beta2"] = beta2_;
    manifest["eps"] = eps_;
    manifest["weight_decay"] = weight_decay_;
    manifest["tensors"] = tensors;
    manifest["blob_nbytes"] = blob.byte_size();
    write_container(path, kOptMagic, manifest, blob.blob());
}

void AdamW::load_state(const std::string& path) {
    auto c = read_container(path, kOptMagic);
    if (c.manifest.value("format", "") != "paraformer-optimizer") throw IoError("not an optimizer state file: " + path);
    t_ = c.manifest.at("t").get<int64_t>();
    beta1_ = c.manifest.at("beta1").get<double>();
    beta2_ = c.manifest.at("beta2").get<double>();
    eps_ = c.manifest.at("eps").get<double>();
    weight_decay_ = c.manifest.at("weight_decay").get<double>();
    const auto& tensors = c.manifest.at("tensors");
    if (tensors.size() != 2 * m_.size()) throw IoError("optimizer state does not match parameter layout");
    BlobReader reader(c.blob);
    for (size_t i = 0; i < m_.size(); ++i) {
        auto tm = reader.read(tensors[2 * i]);
        auto tv = reader.read(tensors[2 * i + 1]);
        if (tm->data.size() != m_[i].size() || tv->data.size() != v_[i].size())
            throw IoError("optimizer moment size mismatch at tensor " + std::to_string(i));
        m_[i] = tm->data;
        v_[i] = tv->data;
    }
}

double cosine_warmup_lr(double base_lr, int epoch, int total_epochs, int warmup_epochs) {
    if (epoch < warmup_epochs) return base_lr * static_cast<double>(epoch + 1) / static_cast<double>(warmup_epochs);
    const int after = total_epochs - warmup_epochs;
    if (after <= 1) return base_lr;
    const double progress = static_cast<double>(epoch - warmup_epochs) / static_cast<double>(after - 1);
    return base_lr * 0.5 * (1.0 + std::cos(progress * M_PI));
}

TrainReport train(Model& model, AdamW& opt, const Dataset& data, const TrainOptions& opts, const EpochCallback& cb) {
    if (data.pairs.empty()) throw ContractError("train: empty dataset");
    if (opts.epochs <= opts.start_epoch) throw ContractError("train: nothing to do");

    TrainReport report;
    report.best_loss = INFINITY;
    ForwardOptions fwd;
    fwd.extract = false;
    fwd.sinkhorn_iters = opts.sinkhorn_iters;

    for (int epoch = opts.start_epoch; epoch < opts.epochs; ++epoch) {
        const double lr = cosine_warmup_lr(opts.lr, epoch, opts.epochs, opts.warmup_epochs);

        // stateless shuffle: same (seed, epoch) always yields the same order
        std::vector<size_t> order(data.pairs.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(opts.shuffle_seed * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(epoch));
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = shuffle_rng.uniform_int(i);
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        for (size_t step = 0; step < order.size(); ++step) {
            const auto& sample = data.pairs[order[step]];
            Tape tape;
            auto res = model.forward(&tape, sample.x, sample.y, fwd);
            auto loss = matching_loss(&tape, res.assignment, sample.gt);
            const double loss_val = loss->item();
            if (!std::isfinite(loss_val)) {
                std::cerr << "train: non-finite loss at epoch " << epoch << " step " << step << " pair "
                          << order[step] << "\n  lr=" << lr << " steps_taken=" << opt.steps_taken() << std::endl;
                throw NumericError("training loss became non-finite (epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(step) + ")");
            }
            loss_sum += loss_val;
            model.params().zero_grads();
            tape.backward(loss);
            opt.step(lr);
        }

        EpochStats es;
        es.epoch = epoch;
        es.mean_loss = loss_sum / static_cast<double>(order.size());
        es.lr = lr;
        report.epochs.push_back(es);
        if (cb) cb(es);

        nlohmann::json extra;
        extra["epoch"] = epoch;
        extra["mean_loss"] = es.mean_loss;
        if (!opts.checkpoint_last.empty()) {
            model.save(opts.checkpoint_last, &extra);
            opt.save_state(opts.checkpoint_last + ".opt");
        }
        if (es.mean_loss < report.best_loss) {
            report.best_loss = es.mean_loss;
            report.best_epoch = epoch;
            if (!opts.checkpoint_best.empty()) model.save(opts.checkpoint_best, &extra);
        }
    }
    return report;
}

}  // namespace paraformer
