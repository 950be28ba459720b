#include "rcalign/nn.hpp"

#include <cmath>

namespace rcalign::nn {

ad::Var ParamStore::add(const std::string& name, Tensor init) {
  RCA_CHECK(!entries_.count(name), "duplicate parameter name: " + name);
  auto v = ad::param(std::move(init));
  entries_[name] = Entry{v, true};
  return v;
}

ad::Var ParamStore::add_buffer(const std::string& name, Tensor init) {
  RCA_CHECK(!entries_.count(name), "duplicate buffer name: " + name);
  auto v = ad::constant(std::move(init));
  entries_[name] = Entry{v, false};
  return v;
}

ad::Var ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  RCA_CHECK(it != entries_.end(), "unknown parameter: " + name);
  return it->second.var;
}

std::map<std::string, ad::Var> ParamStore::all() const {
  std::map<std::string, ad::Var> out;
  for (const auto& [k, e] : entries_) out[k] = e.var;
  return out;
}

std::vector<std::pair<std::string, ad::Var>> ParamStore::learnable() const {
  std::vector<std::pair<std::string, ad::Var>> out;
  for (const auto& [k, e] : entries_)
    if (e.learnable) out.emplace_back(k, e.var);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [k, e] : entries_) e.var->zero_grad();
}

int64_t ParamStore::count_scalars() const {
  int64_t n = 0;
  for (const auto& [k, e] : entries_)
    if (e.learnable) n += e.var->value.size();
  return n;
}

Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / std::max(1, fan_in));
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

Tensor normal_init(std::vector<int> shape, double sigma, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.normal(0.0, sigma);
  return t;
}

Linear::Linear(ParamStore& ps, const std::string& name, int in, int out,
               Rng& rng, bool zero_init) {
  Tensor wt = zero_init ? Tensor::zeros({in, out})
                        : kaiming_uniform({in, out}, in, rng);
  w = ps.add(name + ".w", std::move(wt));
  b = ps.add(name + ".b", Tensor::zeros({out}));
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int in, int out,
               int k, int stride_, int pad_, Rng& rng, bool zero_init,
               double bias_init)
    : stride(stride_), pad(pad_) {
  Tensor wt = zero_init ? Tensor::zeros({out, in, k, k})
                        : kaiming_uniform({out, in, k, k}, in * k * k, rng);
  w = ps.add(name + ".w", std::move(wt));
  b = ps.add(name + ".b", Tensor::full({out}, bias_init));
}

BatchNorm2d::BatchNorm2d(ParamStore& ps, const std::string& name,
                         int channels) {
  gamma = ps.add(name + ".gamma", Tensor::full({channels}, 1.0));
  beta = ps.add(name + ".beta", Tensor::zeros({channels}));
  running_mean = ps.add_buffer(name + ".running_mean", Tensor::zeros({channels}));
  running_var = ps.add_buffer(name + ".running_var", Tensor::full({channels}, 1.0));
}

ad::Var BatchNorm2d::forward(const ad::Var& x, bool train) {
  if (train) {
    std::vector<double> bm, bv;
    auto y = ad::batch_norm2d_train(x, gamma, beta, eps, &bm, &bv);
    for (size_t c = 0; c < bm.size(); ++c) {
      running_mean->value[static_cast<int64_t>(c)] =
          (1.0 - momentum) * running_mean->value[static_cast<int64_t>(c)] +
          momentum * bm[c];
      running_var->value[static_cast<int64_t>(c)] =
          (1.0 - momentum) * running_var->value[static_cast<int64_t>(c)] +
          momentum * bv[c];
    }
    return y;
  }
  return ad::batch_norm2d_eval(x, gamma, beta, running_mean->value.data,
                               running_var->value.data, eps);
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int dim) {
  gamma = ps.add(name + ".gamma", Tensor::full({dim}, 1.0));
  beta = ps.add(name + ".beta", Tensor::zeros({dim}));
}

Ffn::Ffn(ParamStore& ps, const std::string& name, int dim, int hidden,
         Rng& rng) {
  fc1 = Linear(ps, name + ".fc1", dim, hidden, rng);
  fc2 = Linear(ps, name + ".fc2", hidden, dim, rng);
}

}  // namespace rcalign::nn
