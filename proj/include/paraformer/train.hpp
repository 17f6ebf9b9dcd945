#pragma once

#include <functional>
#include <string>

#include "paraformer/model.hpp"
#include "paraformer/synthetic.hpp"

namespace paraformer {

// AdamW with decoupled weight decay. Moment buffers follow the parameter
// ordering of the store and serialize alongside the weights for resume.
class AdamW {
public:
    AdamW(ParamStore& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0);

    void step(double lr);
    int64_t steps_taken() const { return t_; }

    // Moment buffers as a manifest+blob container, for interrupt/resume.
    void save_state(const std::string& path) const;
    void load_state(const std::string& path);

private:
    ParamStore& params_;
    double beta1_, beta2_, eps_, weight_decay_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
};

// Linear warm-up into cosine decay, evaluated per epoch as in the training
// recipe (lr fixed within an epoch).
double cosine_warmup_lr(double base_lr, int epoch, int total_epochs, int warmup_epochs);

struct TrainOptions {
    int epochs = 10;
    double lr = 1e-4;  // initial learning rate
    int warmup_epochs = 1;
    double weight_decay = 0.0;
    uint64_t shuffle_seed = 7;
    std::optional<int> sinkhorn_iters;  // override for training speed
    std::string checkpoint_best;  // best-loss checkpoint; empty disables saving
    std::string checkpoint_last;  // per-epoch checkpoint + .opt state, for resume
    int start_epoch = 0;          // resume support
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

struct TrainReport {
    std::vector<EpochStats> epochs;
    double best_loss = 0.0;
    int best_epoch = -1;
};

// Single-threaded training loop over the dataset, batch size one pair.
// Pair order per epoch is a deterministic function of (shuffle_seed, epoch)
// so interrupted runs resume onto the same trajectory. Throws NumericError
// with a diagnostic dump if the loss goes non-finite.
TrainReport train(Model& model, AdamW& opt, const Dataset& data, const TrainOptions& opts,
                  const EpochCallback& cb = nullptr);

// ---- finite-difference gradient checking ---------------------------------

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    int64_t checked = 0;
    int64_t skipped = 0;  // parameters whose perturbation crossed a relu kink / top-k boundary
    bool pass = false;
};

// Central finite differences (eps = 1e-3) against the analytic gradients.
// Relative error uses |a - n| / max(|a|, |n|, 1) so the float32 difference
// quotient noise floor does not swamp small gradients.
GradCheckResult gradcheck_op_suite(uint64_t seed, double tol);
GradCheckResult gradcheck_model(uint64_t seed, double tol);

// Runs per-op and whole-model checks over several seeds; all must pass.
std::vector<GradCheckResult> gradcheck_suite(int seeds, double op_tol = 1e-3, double model_tol = 1e-3);

}  // namespace paraformer
