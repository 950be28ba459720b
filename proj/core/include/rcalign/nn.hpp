#pragma once

#include <map>
#include <string>
#include <vector>

#include "rcalign/autodiff.hpp"

namespace rcalign::nn {

// Named parameter registry. Learnable entries feed the optimizer; buffers
// (running statistics) are carried only for checkpointing.
class ParamStore {
 public:
  ad::Var add(const std::string& name, Tensor init);
  ad::Var add_buffer(const std::string& name, Tensor init);
  ad::Var get(const std::string& name) const;
  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  // name -> var, learnable and buffers alike (checkpoint view)
  std::map<std::string, ad::Var> all() const;
  // learnable only, in name order (optimizer view)
  std::vector<std::pair<std::string, ad::Var>> learnable() const;
  void zero_grads();
  int64_t count_scalars() const;

 private:
  struct Entry {
    ad::Var var;
    bool learnable = true;
  };
  std::map<std::string, Entry> entries_;
};

// init helpers
Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng);
Tensor normal_init(std::vector<int> shape, double sigma, Rng& rng);

struct Linear {
  ad::Var w;  // [in, out]
  ad::Var b;  // [out]

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
         bool zero_init = false);
  ad::Var forward(const ad::Var& x) const { return ad::linear(x, w, b); }
  int out_dim() const { return w->value.dim(1); }
};

struct Conv2d {
  ad::Var w;  // [out, in, k, k]
  ad::Var b;  // [out]
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int in, int out, int k,
         int stride, int pad, Rng& rng, bool zero_init = false,
         double bias_init = 0.0);
  ad::Var forward(const ad::Var& x) const {
    return ad::conv2d(x, w, b, stride, pad);
  }
};

// Per-sample batch norm: training statistics come from the (H,W) plane of
// the sample being processed; running statistics serve inference.
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParamStore& ps, const std::string& name, int channels);
  ad::Var forward(const ad::Var& x, bool train);

  ad::Var gamma, beta;
  ad::Var running_mean, running_var;  // buffers
  double momentum = 0.1;
  double eps = 1e-5;
};

struct LayerNorm {
  ad::Var gamma, beta;
  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int dim);
  ad::Var forward(const ad::Var& x) const {
    return ad::layer_norm_rows(x, gamma, beta);
  }
};

struct Ffn {
  Linear fc1, fc2;
  Ffn() = default;
  Ffn(ParamStore& ps, const std::string& name, int dim, int hidden, Rng& rng);
  ad::Var forward(const ad::Var& x) const {
    return fc2.forward(ad::relu(fc1.forward(x)));
  }
};

}  // namespace rcalign::nn
