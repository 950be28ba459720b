#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "rcalign/tensor.hpp"

namespace rcalign::ad {

// Reverse-mode autodiff over Tensor values. Each op builds a node holding
// its output value and a closure that scatters the output gradient into
// the parents. Graphs are rebuilt per forward pass and freed when the
// root goes out of scope.
class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  explicit Node(Tensor v, bool req = false)
      : value(std::move(v)), requires_grad(req) {}

  void ensure_grad() {
    if (grad.data.empty()) grad = Tensor::zeros(value.shape);
  }
  void zero_grad() {
    if (!grad.data.empty())
      for (auto& g : grad.data) g = 0.0;
  }
};

Var constant(Tensor v);
Var param(Tensor v);
// value copy cut off from the graph
Var detach(const Var& x);

// Backprop from a scalar root (seed gradient 1).
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var scale_by(const Var& a, const Var& s);  // s: scalar Var
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp_op(const Var& a);
Var log_op(const Var& a);
Var softplus(const Var& a);
Var square(const Var& a);
Var sqrt_op(const Var& a);
Var abs_op(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var inverse_sigmoid(const Var& a, double eps = 1e-6);

// ---- shape ----
Var reshape(const Var& a, std::vector<int> shape);
Var slice_cols(const Var& a, int c0, int c1);         // rank-2
Var slice_rows(const Var& a, int r0, int r1);         // rank-2
Var concat_rows(const std::vector<Var>& parts);       // rank-2
Var concat_channels(const std::vector<Var>& parts);   // rank-3 CHW
Var gather_rows(const Var& a, std::vector<int> idx);  // rank-2
Var repeat_rows(const Var& a, int times);  // row i -> times copies, interleaved
Var transpose(const Var& a);               // rank-2

// ---- reductions / linear algebra ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);
// order-invariant mean (sorted accumulation); bitwise stable under
// permutations of the input elements
Var mean_all_sorted(const Var& a);
Var matmul(const Var& a, const Var& b);              // [m,k]x[k,n]
Var linear(const Var& x, const Var& w, const Var& b);  // [n,i]x[i,o]+[o]
Var add_rowvec(const Var& x, const Var& b);           // [n,d]+[d]
Var mul_rows(const Var& x, const std::vector<double>& per_row);

// ---- row-wise nonlinear ----
Var softmax_rows(const Var& x);
// log-softmax with sorted exp-accumulation: row permutations of the
// logits matrix produce bitwise-identical rows
Var log_softmax_rows(const Var& x);
Var gather_diag(const Var& x);  // [n,n] -> [n]
Var l2_normalize_rows(const Var& x, double eps);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta,
                    double eps = 1e-5);

// ---- losses ----
Var mean_abs_diff(const Var& a, const Var& b);  // scalar mean |a-b|
Var l1_diff_sum(const Var& a, const Var& b);    // scalar sum |a-b|
Var sum_squared_diff(const Var& a, const Var& b);

// ---- structured ops ----
// values [n*k, d] with weights [n, k] -> [n, d]
Var weighted_sum_k(const Var& values, const Var& weights);
// grid [C,H,W], coords [n,2] as (x,y) in cell units (integer = cell
// center); zero padding outside; differentiable in grid and coords
Var bilinear_sample(const Var& grid, const Var& coords);
// x [Ci,H,W], w [Co,Ci,kh,kw], b [Co]
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// point features [P,C] scattered to [C,H,W] by per-point flat cell id
// (iy*W+ix, -1 = dropped); empty cells stay exactly 0; ties keep the
// lowest point index
Var scatter_max2d(const Var& point_feats, const std::vector<int>& cell_ids,
                  int height, int width);
// gather grid feature columns at flat cell ids -> [n, C]
Var gather_grid_cells(const Var& grid, const std::vector<int>& cell_ids);
// batch-norm over (H,W) of a single [C,H,W] sample using given statistics
Var batch_norm2d_eval(const Var& x, const Var& gamma, const Var& beta,
                      const std::vector<double>& mean,
                      const std::vector<double>& var, double eps);
// training mode: statistics computed from x; batch mean/var written out
Var batch_norm2d_train(const Var& x, const Var& gamma, const Var& beta,
                       double eps, std::vector<double>* batch_mean,
                       std::vector<double>* batch_var);

}  // namespace rcalign::ad
