#include "rcalign/optim.hpp"

#include <cmath>

namespace rcalign {

double cosine_lr(double base, double final_fraction, int step, int total) {
  double lo = base * final_fraction;
  if (total <= 1) return lo;
  double t = std::min(1.0, static_cast<double>(step) / (total - 1));
  return lo + (base - lo) * 0.5 * (1.0 + std::cos(M_PI * t));
}

AdamW::AdamW(nn::ParamStore& ps, const OptimConfig& cfg) : ps_(ps), cfg_(cfg) {
  for (const auto& [name, var] : ps.learnable()) {
    m_[name] = Tensor::zeros(var->value.shape);
    v_[name] = Tensor::zeros(var->value.shape);
  }
}

double AdamW::grad_norm() const {
  double acc = 0.0;
  for (const auto& [name, var] : ps_.learnable()) {
    if (var->grad.data.empty()) continue;
    for (double g : var->grad.data) acc += g * g;
  }
  return std::sqrt(acc);
}

void AdamW::step(double lr) {
  ++t_;
  double clip_scale = 1.0;
  if (cfg_.grad_clip > 0.0) {
    double norm = grad_norm();
    if (norm > cfg_.grad_clip) clip_scale = cfg_.grad_clip / norm;
  }
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, var] : ps_.learnable()) {
    Tensor& m = m_[name];
    Tensor& v = v_[name];
    bool has_grad = !var->grad.data.empty();
    for (int64_t i = 0; i < var->value.size(); ++i) {
      double g = has_grad ? var->grad[i] * clip_scale : 0.0;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      double mh = m[i] / bc1;
      double vh = v[i] / bc2;
      // decoupled weight decay
      var->value[i] -= lr * (mh / (std::sqrt(vh) + 1e-8) +
                             cfg_.weight_decay * var->value[i]);
    }
  }
}

void AdamW::state_to(Checkpoint* ck) const {
  for (const auto& [name, t] : m_) ck->arrays["opt.m." + name] = t;
  for (const auto& [name, t] : v_) ck->arrays["opt.v." + name] = t;
  Tensor step({1});
  step[0] = static_cast<double>(t_);
  ck->arrays["opt.step"] = step;
}

void AdamW::state_from(const Checkpoint& ck) {
  for (auto& [name, t] : m_) {
    auto it = ck.arrays.find("opt.m." + name);
    if (it != ck.arrays.end()) t = it->second;
  }
  for (auto& [name, t] : v_) {
    auto it = ck.arrays.find("opt.v." + name);
    if (it != ck.arrays.end()) t = it->second;
  }
  auto it = ck.arrays.find("opt.step");
  if (it != ck.arrays.end()) t_ = static_cast<int64_t>(it->second[0]);
}

}  // namespace rcalign
