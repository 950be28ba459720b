#pragma once

#include "rcalign/checkpoint.hpp"
#include "rcalign/config.hpp"

namespace rcalign {

// cosine annealing from base lr down to base*final_fraction over T steps
double cosine_lr(double base, double final_fraction, int step, int total);

class AdamW {
 public:
  AdamW(nn::ParamStore& ps, const OptimConfig& cfg);

  // clips the global gradient norm, applies one update, bumps the step
  void step(double lr);
  double grad_norm() const;

  int64_t step_count() const { return t_; }
  void state_to(Checkpoint* ck) const;
  void state_from(const Checkpoint& ck);

 private:
  nn::ParamStore& ps_;
  OptimConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace rcalign
