#include "paraformer/params.hpp"

#include <cmath>

namespace paraformer {

TensorPtr ParamStore::add(const std::string& name, TensorPtr t) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, t);
    return t;
}

const TensorPtr& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t->numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : entries_)
        if (!t->grad.empty()) t->zero_grad();
}

namespace {

void fill_uniform(Tensor& t, Rng& rng, float bound) {
    for (auto& v : t.data) v = rng.uniform_f(-bound, bound);
}

void init_weight(Tensor& w, Rng& rng, Init init, int64_t fan_in, int64_t fan_out) {
    switch (init) {
        case Init::KaimingUniform:
            fill_uniform(w, rng, std::sqrt(6.0f / static_cast<float>(fan_in)));
            break;
        case Init::XavierUniform:
            fill_uniform(w, rng, std::sqrt(6.0f / static_cast<float>(fan_in + fan_out)));
            break;
        case Init::Zero:
            break;
    }
}

}  // namespace

Linear make_linear(ParamStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng, Init init) {
    Linear lin;
    lin.w = store.add(name + ".w", Tensor::zeros(in, out, true));
    lin.b = store.add(name + ".b", Tensor::vector(out, true));
    init_weight(*lin.w, rng, init, in, out);
    return lin;
}

Mlp2 make_mlp2(ParamStore& store, const std::string& name, int64_t in, int64_t hidden, int64_t out, Rng& rng,
               Init out_init) {
    Mlp2 mlp;
    mlp.l1 = make_linear(store, name + ".l1", in, hidden, rng, Init::KaimingUniform);
    mlp.l2 = make_linear(store, name + ".l2", hidden, out, rng, out_init);
    return mlp;
}

TensorPtr MlpN::apply(Tape* tape, const TensorPtr& x) const {
    TensorPtr h = x;
    for (size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].apply(tape, h);
        if (i + 1 < layers.size()) h = relu(tape, h);
    }
    return h;
}

MlpN make_mlpn(ParamStore& store, const std::string& name, const std::vector<int64_t>& dims, Rng& rng, Init out_init) {
    if (dims.size() < 2) throw ConfigError("make_mlpn: need at least in/out dims");
    MlpN mlp;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        const bool last = (i + 2 == dims.size());
        mlp.layers.push_back(make_linear(store, name + ".l" + std::to_string(i + 1), dims[i], dims[i + 1], rng,
                                         last ? out_init : Init::KaimingUniform));
    }
    return mlp;
}

}  // namespace paraformer
