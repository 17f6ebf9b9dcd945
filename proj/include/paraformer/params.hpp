#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "paraformer/rng.hpp"
#include "paraformer/tensor.hpp"

namespace paraformer {

// Ordered registry of named weight tensors. Registration order is the
// canonical order used by the optimizer and by the serialized blob layout.
class ParamStore {
public:
    TensorPtr add(const std::string& name, TensorPtr t);
    const TensorPtr& get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<std::pair<std::string, TensorPtr>>& entries() const { return entries_; }
    size_t size() const { return entries_.size(); }
    int64_t total_elements() const;
    void zero_grads();

private:
    std::vector<std::pair<std::string, TensorPtr>> entries_;
    std::map<std::string, size_t> index_;
};

// y = x W + b with W [in x out], b [out].
struct Linear {
    TensorPtr w;
    TensorPtr b;

    TensorPtr apply(Tape* tape, const TensorPtr& x) const { return add_rowvec(tape, matmul(tape, x, w), b); }
    int64_t in_dim() const { return w->shape[0]; }
    int64_t out_dim() const { return w->shape[1]; }
};

// Two-layer perceptron, ReLU after the first layer.
struct Mlp2 {
    Linear l1;
    Linear l2;

    TensorPtr apply(Tape* tape, const TensorPtr& x) const { return l2.apply(tape, relu(tape, l1.apply(tape, x))); }
};

enum class Init { KaimingUniform, XavierUniform, Zero };

Linear make_linear(ParamStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng, Init init);
Mlp2 make_mlp2(ParamStore& store, const std::string& name, int64_t in, int64_t hidden, int64_t out, Rng& rng,
               Init out_init = Init::XavierUniform);

// Deep MLP with ReLU between all layers; dims = {in, h1, ..., out}.
struct MlpN {
    std::vector<Linear> layers;
    TensorPtr apply(Tape* tape, const TensorPtr& x) const;
};

MlpN make_mlpn(ParamStore& store, const std::string& name, const std::vector<int64_t>& dims, Rng& rng,
               Init out_init = Init::XavierUniform);

}  // namespace paraformer
