#include "rcalign/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace rcalign::ad {

namespace {

Var make(Tensor value, std::vector<Var> parents,
         std::function<void(Node&)> bk) {
  bool req = false;
  for (const auto& p : parents)
    if (p->requires_grad) req = true;
  auto n = std::make_shared<Node>(std::move(value), req);
  if (req) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(bk);
  }
  return n;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

Var constant(Tensor v) { return std::make_shared<Node>(std::move(v), false); }

Var param(Tensor v) { return std::make_shared<Node>(std::move(v), true); }

Var detach(const Var& x) { return constant(x->value); }

void backward(const Var& root) {
  RCA_CHECK(root->value.size() == 1, "backward: root must be a scalar");
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Item {
    Node* n;
    size_t next;
  };
  std::vector<Item> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    Item& it = stack.back();
    if (it.next < it.n->parents.size()) {
      Node* c = it.n->parents[it.next++].get();
      if (c->requires_grad && !visited.count(c)) {
        visited.insert(c);
        stack.push_back({c, 0});
      }
    } else {
      order.push_back(it.n);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad.data[0] = 1.0;
  for (auto rit = order.rbegin(); rit != order.rend(); ++rit) {
    Node* n = *rit;
    if (n->backward_fn && !n->grad.data.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  RCA_CHECK(a->value.same_shape(b->value), "add: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      auto& p = n.parents[k];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (int64_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  RCA_CHECK(a->value.same_shape(b->value), "sub: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      auto& p = n.parents[0];
      p->ensure_grad();
      for (int64_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
    }
    if (n.parents[1]->requires_grad) {
      auto& p = n.parents[1];
      p->ensure_grad();
      for (int64_t i = 0; i < n.grad.size(); ++i) p->grad[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  RCA_CHECK(a->value.same_shape(b->value), "mul: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    auto& a = n.parents[0];
    auto& b = n.parents[1];
    if (a->requires_grad) {
      a->ensure_grad();
      for (int64_t i = 0; i < n.grad.size(); ++i)
        a->grad[i] += n.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t i = 0; i < n.grad.size(); ++i)
        b->grad[i] += n.grad[i] * a->value[i];
    }
  });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (auto& v : out.data) v += s;
  return make(std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
  });
}

Var mul_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (auto& v : out.data) v *= s;
  return make(std::move(out), {a}, [s](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i) p->grad[i] += s * n.grad[i];
  });
}

Var scale_by(const Var& a, const Var& s) {
  RCA_CHECK(s->value.size() == 1, "scale_by: scale must be scalar");
  double sv = s->value[0];
  Tensor out = a->value;
  for (auto& v : out.data) v *= sv;
  return make(std::move(out), {a, s}, [sv](Node& n) {
    auto& a = n.parents[0];
    auto& s = n.parents[1];
    if (a->requires_grad) {
      a->ensure_grad();
      for (int64_t i = 0; i < n.grad.size(); ++i)
        a->grad[i] += sv * n.grad[i];
    }
    if (s->requires_grad) {
      s->ensure_grad();
      double acc = 0.0;
      for (int64_t i = 0; i < n.grad.size(); ++i)
        acc += n.grad[i] * a->value[i];
      s->grad[0] += acc;
    }
  });
}

Var relu(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return make(std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i)
      if (p->value[i] > 0.0) p->grad[i] += n.grad[i];
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = stable_sigmoid(v);
  return make(std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i) {
      double y = n.value[i];
      p->grad[i] += n.grad[i] * y * (1.0 - y);
    }
  });
}

Var exp_op(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::exp(v);
  return make(std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i)
      p->grad[i] += n.grad[i] * n.value[i];
  });
}

Var log_op(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::log(v);
  return make(std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i)
      p->grad[i] += n.grad[i] / p->value[i];
  });
}

Var softplus(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = stable_softplus(v);
  return make(std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i)
      p->grad[i] += n.grad[i] * stable_sigmoid(p->value[i]);
  });
}

Var square(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v *= v;
  return make(std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i)
      p->grad[i] += 2.0 * p->value[i] * n.grad[i];
  });
}

Var sqrt_op(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::sqrt(v);
  return make(std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i)
      p->grad[i] += 0.5 / std::max(n.value[i], 1e-300) * n.grad[i];
  });
}

Var abs_op(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::abs(v);
  return make(std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i) {
      double x = p->value[i];
      double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
      p->grad[i] += s * n.grad[i];
    }
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::min(std::max(v, lo), hi);
  return make(std::move(out), {a}, [lo, hi](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i) {
      double x = p->value[i];
      if (x >= lo && x <= hi) p->grad[i] += n.grad[i];
    }
  });
}

Var inverse_sigmoid(const Var& a, double eps) {
  Tensor out = a->value;
  for (auto& v : out.data) {
    double x = std::min(std::max(v, eps), 1.0 - eps);
    v = std::log(x) - std::log1p(-x);
  }
  return make(std::move(out), {a}, [eps](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i) {
      double x = p->value[i];
      if (x < eps || x > 1.0 - eps) continue;
      p->grad[i] += n.grad[i] / (x * (1.0 - x));
    }
  });
}

// ---------------------------------------------------------------- shape

Var reshape(const Var& a, std::vector<int> shape) {
  RCA_CHECK(shape_size(shape) == a->value.size(), "reshape: size mismatch");
  Tensor out;
  out.shape = std::move(shape);
  out.data = a->value.data;
  return make(std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
  });
}

Var slice_cols(const Var& a, int c0, int c1) {
  RCA_CHECK(a->value.rank() == 2, "slice_cols: rank-2 only");
  int rows = a->value.dim(0), cols = a->value.dim(1);
  RCA_CHECK(0 <= c0 && c0 < c1 && c1 <= cols, "slice_cols: bad range");
  Tensor out({rows, c1 - c0});
  for (int r = 0; r < rows; ++r)
    for (int c = c0; c < c1; ++c) out.at2(r, c - c0) = a->value.at2(r, c);
  return make(std::move(out), {a}, [c0, c1](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    int rows = n.value.dim(0);
    for (int r = 0; r < rows; ++r)
      for (int c = c0; c < c1; ++c)
        p->grad.at2(r, c) += n.grad.at2(r, c - c0);
  });
}

Var slice_rows(const Var& a, int r0, int r1) {
  RCA_CHECK(a->value.rank() == 2, "slice_rows: rank-2 only");
  int rows = a->value.dim(0), cols = a->value.dim(1);
  RCA_CHECK(0 <= r0 && r0 < r1 && r1 <= rows, "slice_rows: bad range");
  Tensor out({r1 - r0, cols});
  std::copy(a->value.data.begin() + static_cast<size_t>(r0) * cols,
            a->value.data.begin() + static_cast<size_t>(r1) * cols,
            out.data.begin());
  return make(std::move(out), {a}, [r0, cols](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    int64_t base = static_cast<int64_t>(r0) * cols;
    for (int64_t i = 0; i < n.grad.size(); ++i) p->grad[base + i] += n.grad[i];
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  RCA_CHECK(!parts.empty(), "concat_rows: empty input");
  int cols = parts[0]->value.dim(1);
  int rows = 0;
  for (const auto& p : parts) {
    RCA_CHECK(p->value.rank() == 2 && p->value.dim(1) == cols,
              "concat_rows: column mismatch");
    rows += p->value.dim(0);
  }
  Tensor out({rows, cols});
  int64_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data.begin(), p->value.data.end(),
              out.data.begin() + off);
    off += p->value.size();
  }
  return make(std::move(out), parts, [](Node& n) {
    int64_t off = 0;
    for (auto& p : n.parents) {
      int64_t sz = p->value.size();
      if (p->requires_grad) {
        p->ensure_grad();
        for (int64_t i = 0; i < sz; ++i) p->grad[i] += n.grad[off + i];
      }
      off += sz;
    }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  RCA_CHECK(!parts.empty(), "concat_channels: empty input");
  int h = parts[0]->value.dim(1), w = parts[0]->value.dim(2);
  int ch = 0;
  for (const auto& p : parts) {
    RCA_CHECK(p->value.rank() == 3 && p->value.dim(1) == h &&
                  p->value.dim(2) == w,
              "concat_channels: spatial mismatch");
    ch += p->value.dim(0);
  }
  Tensor out({ch, h, w});
  int64_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data.begin(), p->value.data.end(),
              out.data.begin() + off);
    off += p->value.size();
  }
  return make(std::move(out), parts, [](Node& n) {
    int64_t off = 0;
    for (auto& p : n.parents) {
      int64_t sz = p->value.size();
      if (p->requires_grad) {
        p->ensure_grad();
        for (int64_t i = 0; i < sz; ++i) p->grad[i] += n.grad[off + i];
      }
      off += sz;
    }
  });
}

Var gather_rows(const Var& a, std::vector<int> idx) {
  RCA_CHECK(a->value.rank() == 2, "gather_rows: rank-2 only");
  int cols = a->value.dim(1);
  Tensor out({static_cast<int>(idx.size()), cols});
  for (size_t i = 0; i < idx.size(); ++i) {
    RCA_CHECK(idx[i] >= 0 && idx[i] < a->value.dim(0),
              "gather_rows: index out of range");
    for (int c = 0; c < cols; ++c)
      out.at2(static_cast<int>(i), c) = a->value.at2(idx[i], c);
  }
  return make(std::move(out), {a}, [idx = std::move(idx), cols](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i)
      for (int c = 0; c < cols; ++c)
        p->grad.at2(idx[i], c) += n.grad.at2(static_cast<int>(i), c);
  });
}

Var repeat_rows(const Var& a, int times) {
  RCA_CHECK(a->value.rank() == 2 && times > 0, "repeat_rows: bad input");
  int rows = a->value.dim(0), cols = a->value.dim(1);
  Tensor out({rows * times, cols});
  for (int r = 0; r < rows; ++r)
    for (int t = 0; t < times; ++t)
      for (int c = 0; c < cols; ++c)
        out.at2(r * times + t, c) = a->value.at2(r, c);
  return make(std::move(out), {a}, [times, rows, cols](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int r = 0; r < rows; ++r)
      for (int t = 0; t < times; ++t)
        for (int c = 0; c < cols; ++c)
          p->grad.at2(r, c) += n.grad.at2(r * times + t, c);
  });
}

Var transpose(const Var& a) {
  RCA_CHECK(a->value.rank() == 2, "transpose: rank-2 only");
  int rows = a->value.dim(0), cols = a->value.dim(1);
  Tensor out({cols, rows});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at2(c, r) = a->value.at2(r, c);
  return make(std::move(out), {a}, [rows, cols](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) p->grad.at2(r, c) += n.grad.at2(c, r);
  });
}

// ---------------------------------------------------------------- reductions

Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a->value.data) s += v;
  return make(Tensor::scalar(s), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    double g = n.grad[0];
    for (auto& pg : p->grad.data) pg += g;
  });
}

Var mean_all(const Var& a) {
  int64_t n_el = a->value.size();
  RCA_CHECK(n_el > 0, "mean_all: empty tensor");
  double s = 0.0;
  for (double v : a->value.data) s += v;
  return make(Tensor::scalar(s / static_cast<double>(n_el)), {a},
              [n_el](Node& n) {
                auto& p = n.parents[0];
                if (!p->requires_grad) return;
                p->ensure_grad();
                double g = n.grad[0] / static_cast<double>(n_el);
                for (auto& pg : p->grad.data) pg += g;
              });
}

Var mean_all_sorted(const Var& a) {
  int64_t n_el = a->value.size();
  RCA_CHECK(n_el > 0, "mean_all_sorted: empty tensor");
  std::vector<double> tmp = a->value.data;
  std::sort(tmp.begin(), tmp.end());
  double s = 0.0;
  for (double v : tmp) s += v;
  return make(Tensor::scalar(s / static_cast<double>(n_el)), {a},
              [n_el](Node& n) {
                auto& p = n.parents[0];
                if (!p->requires_grad) return;
                p->ensure_grad();
                double g = n.grad[0] / static_cast<double>(n_el);
                for (auto& pg : p->grad.data) pg += g;
              });
}

Var matmul(const Var& a, const Var& b) {
  RCA_CHECK(a->value.rank() == 2 && b->value.rank() == 2 &&
                a->value.dim(1) == b->value.dim(0),
            "matmul: shape mismatch");
  int m = a->value.dim(0), k = a->value.dim(1), n_ = b->value.dim(1);
  Tensor out({m, n_});
  for (int i = 0; i < m; ++i)
    for (int kk = 0; kk < k; ++kk) {
      double av = a->value.at2(i, kk);
      if (av == 0.0) continue;
      const double* brow = &b->value.data[static_cast<size_t>(kk) * n_];
      double* orow = &out.data[static_cast<size_t>(i) * n_];
      for (int j = 0; j < n_; ++j) orow[j] += av * brow[j];
    }
  return make(std::move(out), {a, b}, [m, k, n_](Node& n) {
    auto& a = n.parents[0];
    auto& b = n.parents[1];
    if (a->requires_grad) {
      a->ensure_grad();
      // ga = g . b^T
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n_; ++j) {
          double g = n.grad.at2(i, j);
          if (g == 0.0) continue;
          for (int kk = 0; kk < k; ++kk)
            a->grad.at2(i, kk) += g * b->value.at2(kk, j);
        }
    }
    if (b->requires_grad) {
      b->ensure_grad();
      // gb = a^T . g
      for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
          double av = a->value.at2(i, kk);
          if (av == 0.0) continue;
          const double* grow = &n.grad.data[static_cast<size_t>(i) * n_];
          double* brow = &b->grad.data[static_cast<size_t>(kk) * n_];
          for (int j = 0; j < n_; ++j) brow[j] += av * grow[j];
        }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  RCA_CHECK(x->value.rank() == 2 && w->value.rank() == 2 &&
                x->value.dim(1) == w->value.dim(0) && b->value.rank() == 1 &&
                b->value.dim(0) == w->value.dim(1),
            "linear: shape mismatch");
  int n_rows = x->value.dim(0), d_in = x->value.dim(1),
      d_out = w->value.dim(1);
  Tensor out({n_rows, d_out});
  for (int r = 0; r < n_rows; ++r) {
    double* orow = &out.data[static_cast<size_t>(r) * d_out];
    for (int j = 0; j < d_out; ++j) orow[j] = b->value[j];
    for (int i = 0; i < d_in; ++i) {
      double xv = x->value.at2(r, i);
      if (xv == 0.0) continue;
      const double* wrow = &w->value.data[static_cast<size_t>(i) * d_out];
      for (int j = 0; j < d_out; ++j) orow[j] += xv * wrow[j];
    }
  }
  return make(std::move(out), {x, w, b}, [n_rows, d_in, d_out](Node& n) {
    auto& x = n.parents[0];
    auto& w = n.parents[1];
    auto& b = n.parents[2];
    if (x->requires_grad) {
      x->ensure_grad();
      for (int r = 0; r < n_rows; ++r)
        for (int i = 0; i < d_in; ++i) {
          const double* wrow = &w->value.data[static_cast<size_t>(i) * d_out];
          const double* grow = &n.grad.data[static_cast<size_t>(r) * d_out];
          double acc = 0.0;
          for (int j = 0; j < d_out; ++j) acc += grow[j] * wrow[j];
          x->grad.at2(r, i) += acc;
        }
    }
    if (w->requires_grad) {
      w->ensure_grad();
      for (int r = 0; r < n_rows; ++r)
        for (int i = 0; i < d_in; ++i) {
          double xv = x->value.at2(r, i);
          if (xv == 0.0) continue;
          const double* grow = &n.grad.data[static_cast<size_t>(r) * d_out];
          double* wrow = &w->grad.data[static_cast<size_t>(i) * d_out];
          for (int j = 0; j < d_out; ++j) wrow[j] += xv * grow[j];
        }
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int r = 0; r < n_rows; ++r)
        for (int j = 0; j < d_out; ++j) b->grad[j] += n.grad.at2(r, j);
    }
  });
}

Var add_rowvec(const Var& x, const Var& b) {
  RCA_CHECK(x->value.rank() == 2 && b->value.rank() == 1 &&
                x->value.dim(1) == b->value.dim(0),
            "add_rowvec: shape mismatch");
  int rows = x->value.dim(0), cols = x->value.dim(1);
  Tensor out = x->value;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at2(r, c) += b->value[c];
  return make(std::move(out), {x, b}, [rows, cols](Node& n) {
    auto& x = n.parents[0];
    auto& b = n.parents[1];
    if (x->requires_grad) {
      x->ensure_grad();
      for (int64_t i = 0; i < n.grad.size(); ++i) x->grad[i] += n.grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) b->grad[c] += n.grad.at2(r, c);
    }
  });
}

Var mul_rows(const Var& x, const std::vector<double>& per_row) {
  RCA_CHECK(x->value.rank() == 2 &&
                static_cast<int>(per_row.size()) == x->value.dim(0),
            "mul_rows: shape mismatch");
  int rows = x->value.dim(0), cols = x->value.dim(1);
  Tensor out = x->value;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at2(r, c) *= per_row[r];
  return make(std::move(out), {x}, [per_row, rows, cols](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        p->grad.at2(r, c) += n.grad.at2(r, c) * per_row[r];
  });
}

// ---------------------------------------------------------------- row-wise

Var softmax_rows(const Var& x) {
  RCA_CHECK(x->value.rank() == 2, "softmax_rows: rank-2 only");
  int rows = x->value.dim(0), cols = x->value.dim(1);
  Tensor out({rows, cols});
  for (int r = 0; r < rows; ++r) {
    double m = -1e300;
    for (int c = 0; c < cols; ++c) m = std::max(m, x->value.at2(r, c));
    double s = 0.0;
    for (int c = 0; c < cols; ++c) {
      double e = std::exp(x->value.at2(r, c) - m);
      out.at2(r, c) = e;
      s += e;
    }
    for (int c = 0; c < cols; ++c) out.at2(r, c) /= s;
  }
  return make(std::move(out), {x}, [rows, cols](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < cols; ++c)
        dot += n.grad.at2(r, c) * n.value.at2(r, c);
      for (int c = 0; c < cols; ++c)
        p->grad.at2(r, c) +=
            n.value.at2(r, c) * (n.grad.at2(r, c) - dot);
    }
  });
}

Var log_softmax_rows(const Var& x) {
  RCA_CHECK(x->value.rank() == 2, "log_softmax_rows: rank-2 only");
  int rows = x->value.dim(0), cols = x->value.dim(1);
  Tensor out({rows, cols});
  std::vector<double> exps(static_cast<size_t>(cols));
  for (int r = 0; r < rows; ++r) {
    double m = -1e300;
    for (int c = 0; c < cols; ++c) m = std::max(m, x->value.at2(r, c));
    for (int c = 0; c < cols; ++c)
      exps[static_cast<size_t>(c)] = std::exp(x->value.at2(r, c) - m);
    // sorted accumulation: the sum is invariant to the order the row's
    // entries arrived in
    std::sort(exps.begin(), exps.end());
    double s = 0.0;
    for (double e : exps) s += e;
    double lse = m + std::log(s);
    for (int c = 0; c < cols; ++c) out.at2(r, c) = x->value.at2(r, c) - lse;
  }
  return make(std::move(out), {x}, [rows, cols](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (int c = 0; c < cols; ++c) gsum += n.grad.at2(r, c);
      for (int c = 0; c < cols; ++c)
        p->grad.at2(r, c) +=
            n.grad.at2(r, c) - std::exp(n.value.at2(r, c)) * gsum;
    }
  });
}

Var gather_diag(const Var& x) {
  RCA_CHECK(x->value.rank() == 2 && x->value.dim(0) == x->value.dim(1),
            "gather_diag: square rank-2 only");
  int n_ = x->value.dim(0);
  Tensor out({n_});
  for (int i = 0; i < n_; ++i) out[i] = x->value.at2(i, i);
  return make(std::move(out), {x}, [n_](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int i = 0; i < n_; ++i) p->grad.at2(i, i) += n.grad[i];
  });
}

Var l2_normalize_rows(const Var& x, double eps) {
  RCA_CHECK(x->value.rank() == 2, "l2_normalize_rows: rank-2 only");
  int rows = x->value.dim(0), cols = x->value.dim(1);
  Tensor out({rows, cols});
  std::vector<double> norms(static_cast<size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (int c = 0; c < cols; ++c) {
      double v = x->value.at2(r, c);
      ss += v * v;
    }
    double s = std::sqrt(ss);
    norms[static_cast<size_t>(r)] = s;
    double inv = 1.0 / (s + eps);
    for (int c = 0; c < cols; ++c) out.at2(r, c) = x->value.at2(r, c) * inv;
  }
  return make(std::move(out), {x},
              [rows, cols, eps, norms = std::move(norms)](Node& n) {
                auto& p = n.parents[0];
                if (!p->requires_grad) return;
                p->ensure_grad();
                for (int r = 0; r < rows; ++r) {
                  double s = norms[static_cast<size_t>(r)];
                  double nn = s + eps;
                  double dot = 0.0;
                  for (int c = 0; c < cols; ++c)
                    dot += n.grad.at2(r, c) * p->value.at2(r, c);
                  for (int c = 0; c < cols; ++c) {
                    double g = n.grad.at2(r, c) / nn;
                    if (s > 0.0)
                      g -= p->value.at2(r, c) * dot / (s * nn * nn);
                    p->grad.at2(r, c) += g;
                  }
                }
              });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta,
                    double eps) {
  RCA_CHECK(x->value.rank() == 2 && gamma->value.dim(0) == x->value.dim(1) &&
                beta->value.dim(0) == x->value.dim(1),
            "layer_norm_rows: shape mismatch");
  int rows = x->value.dim(0), cols = x->value.dim(1);
  Tensor out({rows, cols});
  Tensor xhat({rows, cols});
  std::vector<double> inv_std(static_cast<size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += x->value.at2(r, c);
    mu /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      double d = x->value.at2(r, c) - mu;
      var += d * d;
    }
    var /= cols;
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = inv;
    for (int c = 0; c < cols; ++c) {
      double xh = (x->value.at2(r, c) - mu) * inv;
      xhat.at2(r, c) = xh;
      out.at2(r, c) = gamma->value[c] * xh + beta->value[c];
    }
  }
  return make(
      std::move(out), {x, gamma, beta},
      [rows, cols, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Node& n) {
        auto& x = n.parents[0];
        auto& gamma = n.parents[1];
        auto& beta = n.parents[2];
        if (gamma->requires_grad) {
          gamma->ensure_grad();
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
              gamma->grad[c] += n.grad.at2(r, c) * xhat.at2(r, c);
        }
        if (beta->requires_grad) {
          beta->ensure_grad();
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) beta->grad[c] += n.grad.at2(r, c);
        }
        if (x->requires_grad) {
          x->ensure_grad();
          for (int r = 0; r < rows; ++r) {
            double mean_g = 0.0, mean_gx = 0.0;
            for (int c = 0; c < cols; ++c) {
              double gh = n.grad.at2(r, c) * gamma->value[c];
              mean_g += gh;
              mean_gx += gh * xhat.at2(r, c);
            }
            mean_g /= cols;
            mean_gx /= cols;
            double inv = inv_std[static_cast<size_t>(r)];
            for (int c = 0; c < cols; ++c) {
              double gh = n.grad.at2(r, c) * gamma->value[c];
              x->grad.at2(r, c) +=
                  inv * (gh - mean_g - xhat.at2(r, c) * mean_gx);
            }
          }
        }
      });
}

// ---------------------------------------------------------------- losses

Var mean_abs_diff(const Var& a, const Var& b) {
  RCA_CHECK(a->value.same_shape(b->value), "mean_abs_diff: shape mismatch");
  int64_t n_el = a->value.size();
  RCA_CHECK(n_el > 0, "mean_abs_diff: empty tensors");
  double s = 0.0;
  for (int64_t i = 0; i < n_el; ++i) s += std::abs(a->value[i] - b->value[i]);
  return make(Tensor::scalar(s / static_cast<double>(n_el)), {a, b},
              [n_el](Node& n) {
                auto& a = n.parents[0];
                auto& b = n.parents[1];
                double g = n.grad[0] / static_cast<double>(n_el);
                for (int64_t i = 0; i < n_el; ++i) {
                  double d = a->value[i] - b->value[i];
                  double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                  if (a->requires_grad) {
                    a->ensure_grad();
                    a->grad[i] += g * s;
                  }
                  if (b->requires_grad) {
                    b->ensure_grad();
                    b->grad[i] -= g * s;
                  }
                }
              });
}

Var l1_diff_sum(const Var& a, const Var& b) {
  RCA_CHECK(a->value.same_shape(b->value), "l1_diff_sum: shape mismatch");
  int64_t n_el = a->value.size();
  double s = 0.0;
  for (int64_t i = 0; i < n_el; ++i) s += std::abs(a->value[i] - b->value[i]);
  return make(Tensor::scalar(s), {a, b}, [n_el](Node& n) {
    auto& a = n.parents[0];
    auto& b = n.parents[1];
    double g = n.grad[0];
    for (int64_t i = 0; i < n_el; ++i) {
      double d = a->value[i] - b->value[i];
      double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad[i] += g * s;
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad[i] -= g * s;
      }
    }
  });
}

Var sum_squared_diff(const Var& a, const Var& b) {
  RCA_CHECK(a->value.same_shape(b->value), "sum_squared_diff: shape mismatch");
  int64_t n_el = a->value.size();
  double s = 0.0;
  for (int64_t i = 0; i < n_el; ++i) {
    double d = a->value[i] - b->value[i];
    s += d * d;
  }
  return make(Tensor::scalar(s), {a, b}, [n_el](Node& n) {
    auto& a = n.parents[0];
    auto& b = n.parents[1];
    double g = n.grad[0];
    for (int64_t i = 0; i < n_el; ++i) {
      double d = a->value[i] - b->value[i];
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad[i] += 2.0 * d * g;
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad[i] -= 2.0 * d * g;
      }
    }
  });
}

// ---------------------------------------------------------------- structured

Var weighted_sum_k(const Var& values, const Var& weights) {
  RCA_CHECK(values->value.rank() == 2 && weights->value.rank() == 2,
            "weighted_sum_k: rank-2 inputs");
  int n_ = weights->value.dim(0), k = weights->value.dim(1);
  int d = values->value.dim(1);
  RCA_CHECK(values->value.dim(0) == n_ * k, "weighted_sum_k: row mismatch");
  Tensor out({n_, d});
  for (int i = 0; i < n_; ++i)
    for (int kk = 0; kk < k; ++kk) {
      double w = weights->value.at2(i, kk);
      const double* vrow =
          &values->value.data[static_cast<size_t>(i * k + kk) * d];
      double* orow = &out.data[static_cast<size_t>(i) * d];
      for (int c = 0; c < d; ++c) orow[c] += w * vrow[c];
    }
  return make(std::move(out), {values, weights}, [n_, k, d](Node& n) {
    auto& values = n.parents[0];
    auto& weights = n.parents[1];
    for (int i = 0; i < n_; ++i)
      for (int kk = 0; kk < k; ++kk) {
        double w = weights->value.at2(i, kk);
        const double* grow = &n.grad.data[static_cast<size_t>(i) * d];
        if (values->requires_grad) {
          values->ensure_grad();
          double* vg = &values->grad.data[static_cast<size_t>(i * k + kk) * d];
          for (int c = 0; c < d; ++c) vg[c] += w * grow[c];
        }
        if (weights->requires_grad) {
          weights->ensure_grad();
          const double* vrow =
              &values->value.data[static_cast<size_t>(i * k + kk) * d];
          double acc = 0.0;
          for (int c = 0; c < d; ++c) acc += vrow[c] * grow[c];
          weights->grad.at2(i, kk) += acc;
        }
      }
  });
}

Var bilinear_sample(const Var& grid, const Var& coords) {
  RCA_CHECK(grid->value.rank() == 3, "bilinear_sample: grid must be [C,H,W]");
  RCA_CHECK(coords->value.rank() == 2 && coords->value.dim(1) == 2,
            "bilinear_sample: coords must be [n,2]");
  int ch = grid->value.dim(0), h = grid->value.dim(1), w = grid->value.dim(2);
  int n_pts = coords->value.dim(0);
  Tensor out({n_pts, ch});
  for (int i = 0; i < n_pts; ++i) {
    double x = coords->value.at2(i, 0);
    double y = coords->value.at2(i, 1);
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    if (x <= -1.0 || x >= w || y <= -1.0 || y >= h) continue;  // fully padded
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double dx = x - x0, dy = y - y0;
    for (int c = 0; c < ch; ++c) {
      double v00 = (x0 >= 0 && y0 >= 0) ? grid->value.at3(c, y0, x0) : 0.0;
      double v10 =
          (x0 + 1 < w && y0 >= 0) ? grid->value.at3(c, y0, x0 + 1) : 0.0;
      double v01 =
          (x0 >= 0 && y0 + 1 < h) ? grid->value.at3(c, y0 + 1, x0) : 0.0;
      double v11 = (x0 + 1 < w && y0 + 1 < h)
                       ? grid->value.at3(c, y0 + 1, x0 + 1)
                       : 0.0;
      out.at2(i, c) = (1 - dx) * (1 - dy) * v00 + dx * (1 - dy) * v10 +
                      (1 - dx) * dy * v01 + dx * dy * v11;
    }
  }
  return make(std::move(out), {grid, coords}, [ch, h, w, n_pts](Node& n) {
    auto& grid = n.parents[0];
    auto& coords = n.parents[1];
    bool gg = grid->requires_grad, gc = coords->requires_grad;
    if (gg) grid->ensure_grad();
    if (gc) coords->ensure_grad();
    for (int i = 0; i < n_pts; ++i) {
      double x = coords->value.at2(i, 0);
      double y = coords->value.at2(i, 1);
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (x <= -1.0 || x >= w || y <= -1.0 || y >= h) continue;
      int x0 = static_cast<int>(std::floor(x));
      int y0 = static_cast<int>(std::floor(y));
      double dx = x - x0, dy = y - y0;
      double gx = 0.0, gy = 0.0;
      for (int c = 0; c < ch; ++c) {
        double g = n.grad.at2(i, c);
        if (g == 0.0) continue;
        bool in00 = x0 >= 0 && y0 >= 0;
        bool in10 = x0 + 1 < w && y0 >= 0;
        bool in01 = x0 >= 0 && y0 + 1 < h;
        bool in11 = x0 + 1 < w && y0 + 1 < h;
        double v00 = in00 ? grid->value.at3(c, y0, x0) : 0.0;
        double v10 = in10 ? grid->value.at3(c, y0, x0 + 1) : 0.0;
        double v01 = in01 ? grid->value.at3(c, y0 + 1, x0) : 0.0;
        double v11 = in11 ? grid->value.at3(c, y0 + 1, x0 + 1) : 0.0;
        if (gg) {
          if (in00) grid->grad.at3(c, y0, x0) += g * (1 - dx) * (1 - dy);
          if (in10) grid->grad.at3(c, y0, x0 + 1) += g * dx * (1 - dy);
          if (in01) grid->grad.at3(c, y0 + 1, x0) += g * (1 - dx) * dy;
          if (in11) grid->grad.at3(c, y0 + 1, x0 + 1) += g * dx * dy;
        }
        if (gc) {
          gx += g * ((1 - dy) * (v10 - v00) + dy * (v11 - v01));
          gy += g * ((1 - dx) * (v01 - v00) + dx * (v11 - v10));
        }
      }
      if (gc) {
        coords->grad.at2(i, 0) += gx;
        coords->grad.at2(i, 1) += gy;
      }
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  RCA_CHECK(x->value.rank() == 3 && w->value.rank() == 4,
            "conv2d: x [Ci,H,W], w [Co,Ci,kh,kw]");
  int ci = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2);
  int co = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  RCA_CHECK(w->value.dim(1) == ci, "conv2d: channel mismatch");
  RCA_CHECK(b->value.rank() == 1 && b->value.dim(0) == co,
            "conv2d: bias mismatch");
  RCA_CHECK(stride >= 1, "conv2d: stride >= 1");
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (wd + 2 * pad - kw) / stride + 1;
  RCA_CHECK(ho > 0 && wo > 0, "conv2d: empty output");
  Tensor out({co, ho, wo});
  for (int oc = 0; oc < co; ++oc)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double acc = b->value[oc];
        for (int ic = 0; ic < ci; ++ic)
          for (int ky = 0; ky < kh; ++ky) {
            int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= wd) continue;
              acc += x->value.at3(ic, iy, ix) *
                     w->value.data[((static_cast<size_t>(oc) * ci + ic) * kh +
                                    ky) *
                                       kw +
                                   kx];
            }
          }
        out.at3(oc, oy, ox) = acc;
      }
  return make(std::move(out), {x, w, b},
              [ci, h, wd, co, kh, kw, stride, pad, ho, wo](Node& n) {
                auto& x = n.parents[0];
                auto& w = n.parents[1];
                auto& b = n.parents[2];
                bool gx = x->requires_grad, gw = w->requires_grad,
                     gb = b->requires_grad;
                if (gx) x->ensure_grad();
                if (gw) w->ensure_grad();
                if (gb) b->ensure_grad();
                for (int oc = 0; oc < co; ++oc)
                  for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) {
                      double g = n.grad.at3(oc, oy, ox);
                      if (g == 0.0) continue;
                      if (gb) b->grad[oc] += g;
                      for (int ic = 0; ic < ci; ++ic)
                        for (int ky = 0; ky < kh; ++ky) {
                          int iy = oy * stride + ky - pad;
                          if (iy < 0 || iy >= h) continue;
                          for (int kx = 0; kx < kw; ++kx) {
                            int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= wd) continue;
                            size_t wi =
                                ((static_cast<size_t>(oc) * ci + ic) * kh +
                                 ky) *
                                    kw +
                                kx;
                            if (gx)
                              x->grad.at3(ic, iy, ix) += g * w->value.data[wi];
                            if (gw)
                              w->grad.data[wi] += g * x->value.at3(ic, iy, ix);
                          }
                        }
                    }
              });
}

Var scatter_max2d(const Var& point_feats, const std::vector<int>& cell_ids,
                  int height, int width) {
  RCA_CHECK(point_feats->value.rank() == 2, "scatter_max2d: [P,C] input");
  int p_cnt = point_feats->value.dim(0);
  int ch = point_feats->value.dim(1);
  RCA_CHECK(static_cast<int>(cell_ids.size()) == p_cnt,
            "scatter_max2d: cell id count mismatch");
  Tensor out({ch, height, width});
  std::vector<int> argmax(static_cast<size_t>(ch) * height * width, -1);
  for (int p = 0; p < p_cnt; ++p) {
    int cell = cell_ids[static_cast<size_t>(p)];
    if (cell < 0) continue;
    RCA_CHECK(cell < height * width, "scatter_max2d: cell id out of range");
    int cy = cell / width, cx = cell % width;
    for (int c = 0; c < ch; ++c) {
      double v = point_feats->value.at2(p, c);
      size_t oi = (static_cast<size_t>(c) * height + cy) * width + cx;
      if (argmax[oi] < 0 || v > out.data[oi]) {
        out.data[oi] = v;
        argmax[oi] = p;
      }
    }
  }
  return make(std::move(out), {point_feats},
              [argmax = std::move(argmax), ch](Node& n) {
                auto& p = n.parents[0];
                if (!p->requires_grad) return;
                p->ensure_grad();
                (void)ch;
                int hw = n.value.dim(1) * n.value.dim(2);
                for (int c = 0; c < n.value.dim(0); ++c)
                  for (int i = 0; i < hw; ++i) {
                    size_t oi = static_cast<size_t>(c) * hw + i;
                    int src = argmax[oi];
                    if (src >= 0) p->grad.at2(src, c) += n.grad.data[oi];
                  }
              });
}

Var gather_grid_cells(const Var& grid, const std::vector<int>& cell_ids) {
  RCA_CHECK(grid->value.rank() == 3, "gather_grid_cells: [C,H,W] input");
  int ch = grid->value.dim(0), h = grid->value.dim(1), w = grid->value.dim(2);
  int n_ = static_cast<int>(cell_ids.size());
  Tensor out({n_, ch});
  for (int i = 0; i < n_; ++i) {
    int cell = cell_ids[static_cast<size_t>(i)];
    RCA_CHECK(cell >= 0 && cell < h * w, "gather_grid_cells: id out of range");
    for (int c = 0; c < ch; ++c)
      out.at2(i, c) = grid->value.data[static_cast<size_t>(c) * h * w + cell];
  }
  return make(std::move(out), {grid}, [cell_ids, ch](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    int hw = p->value.dim(1) * p->value.dim(2);
    for (size_t i = 0; i < cell_ids.size(); ++i)
      for (int c = 0; c < ch; ++c)
        p->grad.data[static_cast<size_t>(c) * hw + cell_ids[i]] +=
            n.grad.at2(static_cast<int>(i), c);
  });
}

Var batch_norm2d_eval(const Var& x, const Var& gamma, const Var& beta,
                      const std::vector<double>& mean,
                      const std::vector<double>& var, double eps) {
  RCA_CHECK(x->value.rank() == 3, "batch_norm2d_eval: [C,H,W] input");
  int ch = x->value.dim(0);
  int hw = x->value.dim(1) * x->value.dim(2);
  RCA_CHECK(static_cast<int>(mean.size()) == ch &&
                static_cast<int>(var.size()) == ch,
            "batch_norm2d_eval: stats size mismatch");
  Tensor out = x->value;
  std::vector<double> inv(static_cast<size_t>(ch));
  for (int c = 0; c < ch; ++c) {
    inv[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[c] + eps);
    double m = mean[c], g = gamma->value[c], b = beta->value[c];
    double* row = &out.data[static_cast<size_t>(c) * hw];
    for (int i = 0; i < hw; ++i)
      row[i] = g * (row[i] - m) * inv[static_cast<size_t>(c)] + b;
  }
  return make(std::move(out), {x, gamma, beta},
              [ch, hw, mean, inv = std::move(inv)](Node& n) {
                auto& x = n.parents[0];
                auto& gamma = n.parents[1];
                auto& beta = n.parents[2];
                for (int c = 0; c < ch; ++c) {
                  const double* grow = &n.grad.data[static_cast<size_t>(c) * hw];
                  const double* xrow =
                      &x->value.data[static_cast<size_t>(c) * hw];
                  double iv = inv[static_cast<size_t>(c)];
                  if (x->requires_grad) {
                    x->ensure_grad();
                    double* xg = &x->grad.data[static_cast<size_t>(c) * hw];
                    double giv = gamma->value[c] * iv;
                    for (int i = 0; i < hw; ++i) xg[i] += grow[i] * giv;
                  }
                  if (gamma->requires_grad) {
                    gamma->ensure_grad();
                    double acc = 0.0;
                    for (int i = 0; i < hw; ++i)
                      acc += grow[i] * (xrow[i] - mean[c]) * iv;
                    gamma->grad[c] += acc;
                  }
                  if (beta->requires_grad) {
                    beta->ensure_grad();
                    double acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += grow[i];
                    beta->grad[c] += acc;
                  }
                }
              });
}

Var batch_norm2d_train(const Var& x, const Var& gamma, const Var& beta,
                       double eps, std::vector<double>* batch_mean,
                       std::vector<double>* batch_var) {
  RCA_CHECK(x->value.rank() == 3, "batch_norm2d_train: [C,H,W] input");
  int ch = x->value.dim(0);
  int hw = x->value.dim(1) * x->value.dim(2);
  Tensor out = x->value;
  Tensor xhat({ch, x->value.dim(1), x->value.dim(2)});
  std::vector<double> inv(static_cast<size_t>(ch));
  std::vector<double> means(static_cast<size_t>(ch)),
      vars(static_cast<size_t>(ch));
  for (int c = 0; c < ch; ++c) {
    const double* row = &x->value.data[static_cast<size_t>(c) * hw];
    double mu = 0.0;
    for (int i = 0; i < hw; ++i) mu += row[i];
    mu /= hw;
    double v = 0.0;
    for (int i = 0; i < hw; ++i) {
      double d = row[i] - mu;
      v += d * d;
    }
    v /= hw;
    means[static_cast<size_t>(c)] = mu;
    vars[static_cast<size_t>(c)] = v;
    double iv = 1.0 / std::sqrt(v + eps);
    inv[static_cast<size_t>(c)] = iv;
    double* orow = &out.data[static_cast<size_t>(c) * hw];
    double* hrow = &xhat.data[static_cast<size_t>(c) * hw];
    for (int i = 0; i < hw; ++i) {
      double xh = (row[i] - mu) * iv;
      hrow[i] = xh;
      orow[i] = gamma->value[c] * xh + beta->value[c];
    }
  }
  if (batch_mean) *batch_mean = means;
  if (batch_var) *batch_var = vars;
  return make(std::move(out), {x, gamma, beta},
              [ch, hw, xhat = std::move(xhat), inv = std::move(inv)](Node& n) {
                auto& x = n.parents[0];
                auto& gamma = n.parents[1];
                auto& beta = n.parents[2];
                for (int c = 0; c < ch; ++c) {
                  const double* grow = &n.grad.data[static_cast<size_t>(c) * hw];
                  const double* hrow =
                      &xhat.data[static_cast<size_t>(c) * hw];
                  if (gamma->requires_grad) {
                    gamma->ensure_grad();
                    double acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += grow[i] * hrow[i];
                    gamma->grad[c] += acc;
                  }
                  if (beta->requires_grad) {
                    beta->ensure_grad();
                    double acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += grow[i];
                    beta->grad[c] += acc;
                  }
                  if (x->requires_grad) {
                    x->ensure_grad();
                    double mg = 0.0, mgx = 0.0;
                    for (int i = 0; i < hw; ++i) {
                      mg += grow[i];
                      mgx += grow[i] * hrow[i];
                    }
                    mg /= hw;
                    mgx /= hw;
                    double giv = gamma->value[c] * inv[static_cast<size_t>(c)];
                    double* xg = &x->grad.data[static_cast<size_t>(c) * hw];
                    for (int i = 0; i < hw; ++i)
                      xg[i] += giv * (grow[i] - mg - hrow[i] * mgx);
                  }
                }
              });
}

}  // namespace rcalign::ad
