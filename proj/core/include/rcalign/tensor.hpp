#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rcalign {

#define RCA_CHECK(cond, msg)                                       \
  do {                                                             \
    if (!(cond)) throw std::runtime_error(std::string(msg));       \
  } while (0)

int64_t shape_size(const std::vector<int>& shape);

// Dense row-major tensor of doubles. All model math runs in double
// precision; float32 appears only at the checkpoint/dataset boundary.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(shape_size(shape), 0.0);
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v);
  static Tensor scalar(double v);
  static Tensor from(std::vector<int> s, std::vector<double> d);

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // rank-2 [rows, cols]
  double& at2(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
  double at2(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }
  // rank-3 [channels, height, width]
  double& at3(int ch, int y, int x) {
    return data[(static_cast<size_t>(ch) * shape[1] + y) * shape[2] + x];
  }
  double at3(int ch, int y, int x) const {
    return data[(static_cast<size_t>(ch) * shape[1] + y) * shape[2] + x];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

// Deterministic random stream. The engine is std::mt19937_64 (sequence
// fixed by the standard); uniform/normal transforms are written out here
// so draws are identical on every platform and standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed), seed_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller, one value cached
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // inclusive bounds, rejection-free modulo bias is acceptable at our ranges
  int uniform_int(int lo, int hi);

  void shuffle(std::vector<int>& v);

  // independent child stream, stable under unrelated draws on the parent
  Rng fork(uint64_t stream_id) const;

 private:
  std::mt19937_64 engine_;
  uint64_t seed_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace rcalign
