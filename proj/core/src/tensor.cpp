#include "rcalign/tensor.hpp"

#include <cmath>
#include <sstream>

namespace rcalign {

int64_t shape_size(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    RCA_CHECK(d >= 0, "negative tensor dimension");
    n *= d;
  }
  return n;
}

Tensor Tensor::full(std::vector<int> s, double v) {
  Tensor t(std::move(s));
  for (auto& x : t.data) x = v;
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t.data[0] = v;
  return t;
}

Tensor Tensor::from(std::vector<int> s, std::vector<double> d) {
  RCA_CHECK(shape_size(s) == static_cast<int64_t>(d.size()),
            "Tensor::from: shape/data size mismatch");
  Tensor t;
  t.shape = std::move(s);
  t.data = std::move(d);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  // Box-Muller on two uniforms; u1 kept away from 0
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 1e-300);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

int Rng::uniform_int(int lo, int hi) {
  RCA_CHECK(hi >= lo, "uniform_int: empty range");
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(next_u64() % span);
}

void Rng::shuffle(std::vector<int>& v) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(next_u64() % i);
    std::swap(v[i - 1], v[j]);
  }
}

Rng Rng::fork(uint64_t stream_id) const {
  // splitmix64 finalizer over (seed, stream) keeps children decorrelated
  uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z = z ^ (z >> 31);
  return Rng(z);
}

}  // namespace rcalign
