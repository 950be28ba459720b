#include "rcalign/detect.hpp"

#include <algorithm>
#include <cmath>

namespace rcalign {

DetectionHead::DetectionHead(nn::ParamStore& ps, const std::string& name,
                             int dim, int num_classes, Rng& rng) {
  cls1_ = nn::Linear(ps, name + ".cls1", dim, dim, rng);
  cls2_ = nn::Linear(ps, name + ".cls2", dim, num_classes, rng);
  // small prior for the one-vs-all classifier
  for (auto& b : cls2_.b->value.data) b = -3.0;
  box1_ = nn::Linear(ps, name + ".box1", dim, dim, rng);
  box2_ = nn::Linear(ps, name + ".box2", dim, 10, rng, /*zero_init=*/true);
}

DetHeadVars DetectionHead::forward(const ad::Var& z,
                                   const ad::Var& ref_points) const {
  DetHeadVars out;
  out.class_logits = cls2_.forward(ad::relu(cls1_.forward(z)));
  ad::Var box = box2_.forward(ad::relu(box1_.forward(z)));
  ad::Var center_delta = ad::slice_cols(box, 0, 3);
  out.center_norm =
      ad::sigmoid(ad::add(ad::inverse_sigmoid(ref_points), center_delta));
  out.log_size = ad::slice_cols(box, 3, 6);
  out.yaw_sincos = ad::slice_cols(box, 6, 8);
  out.velocity = ad::slice_cols(box, 8, 10);
  return out;
}

DetectionSet decode_detections(const DetHeadVars& head, const GridSpec& spec) {
  int n = head.class_logits->value.dim(0);
  int n_cls = head.class_logits->value.dim(1);
  DetectionSet out;
  out.items.reserve(static_cast<size_t>(n));
  for (int q = 0; q < n; ++q) {
    Detection d;
    d.probs.resize(static_cast<size_t>(n_cls));
    for (int c = 0; c < n_cls; ++c) {
      double x = head.class_logits->value.at2(q, c);
      double p = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                          : std::exp(x) / (1.0 + std::exp(x));
      d.probs[static_cast<size_t>(c)] = p;
      if (p > d.score) {
        d.score = p;
        d.category = c;
      }
    }
    Vec3 m = ref_to_metric(spec, head.center_norm->value.at2(q, 0),
                           head.center_norm->value.at2(q, 1),
                           head.center_norm->value.at2(q, 2));
    d.center = m;
    d.length = std::exp(head.log_size->value.at2(q, 0));
    d.width = std::exp(head.log_size->value.at2(q, 1));
    d.height = std::exp(head.log_size->value.at2(q, 2));
    d.yaw = std::atan2(head.yaw_sincos->value.at2(q, 0),
                       head.yaw_sincos->value.at2(q, 1));
    d.vx = head.velocity->value.at2(q, 0);
    d.vy = head.velocity->value.at2(q, 1);
    out.items.push_back(std::move(d));
  }
  return out;
}

namespace {

double norm01(double v, double lo, double hi) {
  return std::min(std::max((v - lo) / (hi - lo), 0.0), 1.0);
}

}  // namespace

Tensor build_match_cost(const DetHeadVars& head,
                        const std::vector<WorldObject>& gts,
                        const GridSpec& spec, const MatchWeights& w) {
  int n_pred = head.class_logits->value.dim(0);
  int n_gt = static_cast<int>(gts.size());
  Tensor cost({n_pred, n_gt});
  for (int p = 0; p < n_pred; ++p)
    for (int g = 0; g < n_gt; ++g) {
      const auto& gt = gts[static_cast<size_t>(g)];
      double x = head.class_logits->value.at2(p, gt.category);
      double prob = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                             : std::exp(x) / (1.0 + std::exp(x));
      double c = -w.cls * prob;
      double gx = norm01(gt.center.x, spec.xmin, spec.xmax);
      double gy = norm01(gt.center.y, spec.ymin, spec.ymax);
      double gz = norm01(gt.center.z, spec.z_min, spec.z_max);
      c += w.center * (std::abs(head.center_norm->value.at2(p, 0) - gx) +
                       std::abs(head.center_norm->value.at2(p, 1) - gy) +
                       std::abs(head.center_norm->value.at2(p, 2) - gz));
      cost.at2(p, g) = c;
    }
  return cost;
}

std::vector<int> hungarian_match(const Tensor& cost) {
  RCA_CHECK(cost.rank() == 2, "hungarian_match: cost must be rank-2");
  int n_pred = cost.dim(0), n_gt = cost.dim(1);
  if (n_pred == 0 || n_gt == 0)
    return std::vector<int>(static_cast<size_t>(n_gt), -1);

  // shortest-augmenting-path assignment needs rows <= cols; run on the
  // smaller side and invert if needed
  bool rows_are_gts = n_gt <= n_pred;
  int n = rows_are_gts ? n_gt : n_pred;   // rows
  int m = rows_are_gts ? n_pred : n_gt;   // cols
  auto at = [&](int r, int c) {
    return rows_are_gts ? cost.at2(c, r) : cost.at2(r, c);
  };

  const double kInf = 1e300;
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0),
      v(static_cast<size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<size_t>(m) + 1, 0),
      way(static_cast<size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(m) + 1, kInf);
    std::vector<char> used(static_cast<size_t>(m) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      int i0 = p[static_cast<size_t>(j0)], j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        double cur = at(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] -
                     v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> gt_to_pred(static_cast<size_t>(n_gt), -1);
  for (int j = 1; j <= m; ++j) {
    int i = p[static_cast<size_t>(j)];
    if (i == 0) continue;
    if (rows_are_gts)
      gt_to_pred[static_cast<size_t>(i - 1)] = j - 1;
    else
      gt_to_pred[static_cast<size_t>(j - 1)] = i - 1;
  }
  return gt_to_pred;
}

ad::Var task_loss(const DetHeadVars& head, const std::vector<WorldObject>& gts,
                  const std::vector<int>& assignment, const GridSpec& spec,
                  const TaskLossWeights& w) {
  int n = head.class_logits->value.dim(0);
  int n_cls = head.class_logits->value.dim(1);
  RCA_CHECK(assignment.size() == gts.size(),
            "task_loss: assignment/gt size mismatch");
  double norm = std::max<size_t>(1, gts.size());

  // one-vs-all focal classification over every query
  Tensor target({n, n_cls});
  for (size_t g = 0; g < gts.size(); ++g) {
    int pi = assignment[g];
    if (pi < 0) continue;
    target.at2(pi, gts[g].category) = 1.0;
  }
  ad::Var x = head.class_logits;
  ad::Var p = ad::sigmoid(x);
  ad::Var one_minus_p = ad::add_scalar(ad::mul_scalar(p, -1.0), 1.0);
  Tensor tpos = target, tneg({n, n_cls});
  for (int64_t i = 0; i < tneg.size(); ++i) tneg[i] = 1.0 - target[i];
  ad::Var pos = ad::mul(ad::constant(std::move(tpos)),
                        ad::mul(ad::square(one_minus_p),
                                ad::softplus(ad::mul_scalar(x, -1.0))));
  ad::Var negt = ad::mul(ad::constant(std::move(tneg)),
                         ad::mul(ad::square(p), ad::softplus(x)));
  ad::Var cls = ad::mul_scalar(
      ad::add(ad::mul_scalar(ad::sum_all(pos), w.focal_alpha),
              ad::mul_scalar(ad::sum_all(negt), 1.0 - w.focal_alpha)),
      w.cls / norm);

  // L1 regression over matched pairs
  std::vector<int> pred_idx;
  std::vector<const WorldObject*> matched;
  for (size_t g = 0; g < gts.size(); ++g) {
    if (assignment[g] < 0) continue;
    pred_idx.push_back(assignment[g]);
    matched.push_back(&gts[g]);
  }
  if (pred_idx.empty()) return cls;

  int nm = static_cast<int>(pred_idx.size());
  Tensor t_center({nm, 3}), t_size({nm, 3}), t_yaw({nm, 2}), t_vel({nm, 2});
  for (int i = 0; i < nm; ++i) {
    const auto& gt = *matched[static_cast<size_t>(i)];
    t_center.at2(i, 0) = norm01(gt.center.x, spec.xmin, spec.xmax);
    t_center.at2(i, 1) = norm01(gt.center.y, spec.ymin, spec.ymax);
    t_center.at2(i, 2) = norm01(gt.center.z, spec.z_min, spec.z_max);
    t_size.at2(i, 0) = std::log(gt.length);
    t_size.at2(i, 1) = std::log(gt.width);
    t_size.at2(i, 2) = std::log(gt.height);
    t_yaw.at2(i, 0) = std::sin(gt.yaw);
    t_yaw.at2(i, 1) = std::cos(gt.yaw);
    t_vel.at2(i, 0) = gt.vx;
    t_vel.at2(i, 1) = gt.vy;
  }
  ad::Var reg = ad::mul_scalar(
      ad::l1_diff_sum(ad::gather_rows(head.center_norm, pred_idx),
                      ad::constant(std::move(t_center))),
      w.center / norm);
  reg = ad::add(reg, ad::mul_scalar(
                         ad::l1_diff_sum(ad::gather_rows(head.log_size, pred_idx),
                                         ad::constant(std::move(t_size))),
                         w.size / norm));
  reg = ad::add(reg, ad::mul_scalar(
                         ad::l1_diff_sum(ad::gather_rows(head.yaw_sincos, pred_idx),
                                         ad::constant(std::move(t_yaw))),
                         w.yaw / norm));
  reg = ad::add(reg, ad::mul_scalar(
                         ad::l1_diff_sum(ad::gather_rows(head.velocity, pred_idx),
                                         ad::constant(std::move(t_vel))),
                         w.vel / norm));
  return ad::add(cls, reg);
}

ad::Var total_loss(const ad::Var& task, const ad::Var& rh1, const ad::Var& rh2,
                   const ad::Var& cl, const ad::Var& kd,
                   const LossWeights& w) {
  auto check = [](const ad::Var& v, const char* name) {
    if (v && !std::isfinite(v->value[0]))
      throw std::runtime_error(std::string("total_loss: non-finite component ") +
                               name);
  };
  check(task, "L_task");
  check(rh1, "L_RH1");
  check(rh2, "L_RH2");
  check(cl, "L_CL");
  check(kd, "L_KD");
  RCA_CHECK(task != nullptr, "total_loss: task loss required");
  ad::Var total = task;
  if (rh1) total = ad::add(total, ad::mul_scalar(rh1, w.lambda_rh1));
  if (rh2) total = ad::add(total, ad::mul_scalar(rh2, w.lambda_rh2));
  if (cl) total = ad::add(total, ad::mul_scalar(cl, w.lambda_cl));
  if (kd) total = ad::add(total, ad::mul_scalar(kd, w.lambda_kd));
  return total;
}

}  // namespace rcalign
