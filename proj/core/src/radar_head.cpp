#include "rcalign/radar_head.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace rcalign {

RadarHead::RadarHead(nn::ParamStore& ps, const std::string& name,
                     int in_channels, int num_classes, Rng& rng) {
  trunk_ = nn::Conv2d(ps, name + ".trunk", in_channels, in_channels, 3, 1, 1,
                      rng);
  // heatmap bias starts low so the initial foreground prior is small
  hm_ = nn::Conv2d(ps, name + ".hm", in_channels, num_classes, 1, 1, 0, rng,
                   /*zero_init=*/false, /*bias_init=*/-2.19);
  off_ = nn::Conv2d(ps, name + ".off", in_channels, 2, 1, 1, 0, rng);
}

RadarHeadOutput RadarHead::forward(const FeatureGrid& grid) const {
  ad::Var x = ad::relu(trunk_.forward(grid.values));
  RadarHeadOutput out;
  out.heatmap_logits = hm_.forward(x);
  out.heatmap = ad::sigmoid(out.heatmap_logits);
  out.offsets = off_.forward(x);
  return out;
}

HeatmapTargets heatmap_targets(const std::vector<WorldObject>& objects,
                               const GridSpec& spec, int num_classes) {
  spec.validate();
  int h = spec.height(), w = spec.width();
  HeatmapTargets t;
  t.heatmap = Tensor::zeros({num_classes, h, w});
  t.offsets = Tensor::zeros({2, h, w});
  t.mask = Tensor::zeros({h, w});
  for (const auto& obj : objects) {
    if (!spec.contains(obj.center.x, obj.center.y)) continue;
    RCA_CHECK(obj.category >= 0 && obj.category < num_classes,
              "heatmap_targets: category out of range");
    int ix = spec.cell_x(obj.center.x);
    int iy = spec.cell_y(obj.center.y);
    double sigma =
        std::max(1.0, std::sqrt(obj.length * obj.width) / spec.resolution / 3.0);
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    for (int y = std::max(0, iy - radius); y <= std::min(h - 1, iy + radius);
         ++y)
      for (int x = std::max(0, ix - radius); x <= std::min(w - 1, ix + radius);
           ++x) {
        double d2 = static_cast<double>((x - ix) * (x - ix) +
                                        (y - iy) * (y - iy));
        double v = std::exp(-d2 / (2.0 * sigma * sigma));
        double& cell = t.heatmap.at3(obj.category, y, x);
        cell = std::max(cell, v);
      }
    t.heatmap.at3(obj.category, iy, ix) = 1.0;
    double fx = (obj.center.x - spec.xmin) / spec.resolution - ix;
    double fy = (obj.center.y - spec.ymin) / spec.resolution - iy;
    t.offsets.at3(0, iy, ix) = fx - 0.5;
    t.offsets.at3(1, iy, ix) = fy - 0.5;
    if (t.mask.at2(iy, ix) == 0.0) {
      t.mask.at2(iy, ix) = 1.0;
      ++t.num_pos;
    }
  }
  return t;
}

ad::Var radar_head_loss(const RadarHeadOutput& pred,
                        const HeatmapTargets& targets) {
  RCA_CHECK(pred.heatmap_logits->value.same_shape(targets.heatmap),
            "radar_head_loss: heatmap shape mismatch");
  const Tensor& y = targets.heatmap;
  int64_t n_el = y.size();
  double norm = std::max(1, targets.num_pos);

  // penalty-reduced focal, CenterNet form: positives get (1-p)^2 log p,
  // the rest (1-y)^4 p^2 log(1-p)
  Tensor pos_w(y.shape), neg_w(y.shape);
  for (int64_t i = 0; i < n_el; ++i) {
    if (y[i] == 1.0) {
      pos_w[i] = 1.0;
    } else {
      double q = 1.0 - y[i];
      neg_w[i] = q * q * q * q;
    }
  }
  ad::Var x = pred.heatmap_logits;
  ad::Var p = pred.heatmap;
  ad::Var one_minus_p = ad::add_scalar(ad::mul_scalar(p, -1.0), 1.0);
  ad::Var pos_term = ad::mul(ad::constant(std::move(pos_w)),
                             ad::mul(ad::square(one_minus_p), ad::softplus(ad::mul_scalar(x, -1.0))));
  ad::Var neg_term = ad::mul(ad::constant(std::move(neg_w)),
                             ad::mul(ad::square(p), ad::softplus(x)));
  ad::Var hm_loss = ad::mul_scalar(
      ad::add(ad::sum_all(pos_term), ad::sum_all(neg_term)), 1.0 / norm);

  // masked L1 on the two offset channels
  int h = targets.mask.dim(0), w = targets.mask.dim(1);
  Tensor mask2({2, h, w});
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < h * w; ++i)
      mask2.data[static_cast<size_t>(c) * h * w + i] = targets.mask.data[static_cast<size_t>(i)];
  ad::Var diff = ad::abs_op(ad::sub(pred.offsets, ad::constant(targets.offsets)));
  ad::Var off_loss = ad::mul_scalar(
      ad::sum_all(ad::mul(ad::constant(std::move(mask2)), diff)), 1.0 / norm);

  return ad::add(hm_loss, off_loss);
}

namespace {

std::vector<int> topk_cells(const Tensor& heatmap, int k) {
  int n_cls = heatmap.dim(0);
  int hw = heatmap.dim(1) * heatmap.dim(2);
  std::vector<double> best(static_cast<size_t>(hw), 0.0);
  for (int i = 0; i < hw; ++i) {
    double b = heatmap.data[static_cast<size_t>(i)];
    for (int c = 1; c < n_cls; ++c)
      b = std::max(b, heatmap.data[static_cast<size_t>(c) * hw + i]);
    best[static_cast<size_t>(i)] = b;
  }
  std::vector<int> order(static_cast<size_t>(hw));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (best[static_cast<size_t>(a)] != best[static_cast<size_t>(b)])
      return best[static_cast<size_t>(a)] > best[static_cast<size_t>(b)];
    return a < b;  // ties: lowest flat index first
  });
  order.resize(static_cast<size_t>(k));
  return order;
}

double cell_score(const Tensor& heatmap, int cell) {
  int n_cls = heatmap.dim(0);
  int hw = heatmap.dim(1) * heatmap.dim(2);
  double b = 0.0;
  for (int c = 0; c < n_cls; ++c)
    b = std::max(b, heatmap.data[static_cast<size_t>(c) * hw + cell]);
  return b;
}

}  // namespace

RadarQuerySelection select_radar_queries(const Tensor& heatmap,
                                         const Tensor& offsets,
                                         const MergedCloud& cloud,
                                         const GridSpec& spec, int k,
                                         SamplingMethod method, Rng* rng) {
  RCA_CHECK(k >= 0, "select_radar_queries: k must be >= 0");
  int h = spec.height(), w = spec.width();
  RCA_CHECK(heatmap.rank() == 3 && heatmap.dim(1) == h && heatmap.dim(2) == w,
            "select_radar_queries: heatmap/grid mismatch");
  RadarQuerySelection sel;
  if (k == 0) {
    sel.ref_points = Tensor({0, 3});
    return sel;
  }

  auto norm01 = [](double v, double lo, double hi) {
    return std::min(std::max((v - lo) / (hi - lo), 0.0), 1.0);
  };

  if (method == SamplingMethod::kTopk) {
    if (k > h * w) {
      std::cerr << "select_radar_queries: k=" << k << " clamped to " << h * w
                << "\n";
      k = h * w;
    }
    sel.cells = topk_cells(heatmap, k);
    sel.ref_points = Tensor({k, 3});
    for (int i = 0; i < k; ++i) {
      int cell = sel.cells[static_cast<size_t>(i)];
      int iy = cell / w, ix = cell % w;
      double off_x = offsets.at3(0, iy, ix);
      double off_y = offsets.at3(1, iy, ix);
      double x = spec.cell_center_x(ix) + off_x * spec.resolution;
      double y = spec.cell_center_y(iy) + off_y * spec.resolution;
      sel.ref_points.at2(i, 0) = norm01(x, spec.xmin, spec.xmax);
      sel.ref_points.at2(i, 1) = norm01(y, spec.ymin, spec.ymax);
      sel.ref_points.at2(i, 2) = 0.5;  // mid-range height
      sel.scores.push_back(cell_score(heatmap, cell));
    }
    return sel;
  }

  // point-based sampling: gather candidate points with valid cells
  std::vector<int> pt_cells;
  std::vector<int> pts;
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    int cell = spec.flat_cell(cloud.points[i].x, cloud.points[i].y);
    if (cell < 0) continue;
    pts.push_back(static_cast<int>(i));
    pt_cells.push_back(cell);
  }
  int avail = static_cast<int>(pts.size());
  if (k > avail) k = avail;
  if (k == 0) {
    sel.ref_points = Tensor({0, 3});
    return sel;
  }

  std::vector<int> chosen;
  if (method == SamplingMethod::kRandom) {
    RCA_CHECK(rng != nullptr, "select_radar_queries: random needs an rng");
    std::vector<int> order(static_cast<size_t>(avail));
    std::iota(order.begin(), order.end(), 0);
    rng->shuffle(order);
    chosen.assign(order.begin(), order.begin() + k);
  } else {  // farthest point sampling, seeded at the hottest cell's point
    int seed_pt = 0;
    double best = -1.0;
    for (int i = 0; i < avail; ++i) {
      double s = cell_score(heatmap, pt_cells[static_cast<size_t>(i)]);
      if (s > best) {
        best = s;
        seed_pt = i;
      }
    }
    chosen.push_back(seed_pt);
    std::vector<double> dist(static_cast<size_t>(avail), 1e300);
    while (static_cast<int>(chosen.size()) < k) {
      int last = chosen.back();
      const auto& lp = cloud.points[static_cast<size_t>(pts[static_cast<size_t>(last)])];
      int far = -1;
      double far_d = -1.0;
      for (int i = 0; i < avail; ++i) {
        const auto& p = cloud.points[static_cast<size_t>(pts[static_cast<size_t>(i)])];
        double dx = p.x - lp.x, dy = p.y - lp.y;
        double d = std::min(dist[static_cast<size_t>(i)], dx * dx + dy * dy);
        dist[static_cast<size_t>(i)] = d;
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      chosen.push_back(far);
    }
  }

  sel.ref_points = Tensor({k, 3});
  for (int i = 0; i < k; ++i) {
    int pi = chosen[static_cast<size_t>(i)];
    const auto& p = cloud.points[static_cast<size_t>(pts[static_cast<size_t>(pi)])];
    int cell = pt_cells[static_cast<size_t>(pi)];
    sel.cells.push_back(cell);
    sel.scores.push_back(cell_score(heatmap, cell));
    sel.ref_points.at2(i, 0) = norm01(p.x, spec.xmin, spec.xmax);
    sel.ref_points.at2(i, 1) = norm01(p.y, spec.ymin, spec.ymax);
    sel.ref_points.at2(i, 2) = 0.5;
  }
  return sel;
}

Tensor occupancy_project(const std::vector<Vec3>& centers,
                         const GridSpec& spec) {
  Tensor occ({1, spec.height(), spec.width()});
  for (const auto& c : centers) {
    int cell = spec.flat_cell(c.x, c.y);
    if (cell < 0) continue;
    occ.data[static_cast<size_t>(cell)] = 1.0;
  }
  return occ;
}

EnhanceBlock::EnhanceBlock(nn::ParamStore& ps, const std::string& name,
                           int channels, Rng& rng, int kernel) {
  int pad = kernel / 2;
  c1_ = nn::Conv2d(ps, name + ".conv1", channels + 1, channels, kernel, 1, pad,
                   rng);
  c2_ = nn::Conv2d(ps, name + ".conv2", channels, channels, kernel, 1, pad,
                   rng);
  c3_ = nn::Conv2d(ps, name + ".conv3", channels, channels, kernel, 1, pad,
                   rng);
  b1_ = nn::BatchNorm2d(ps, name + ".bn1", channels);
  b2_ = nn::BatchNorm2d(ps, name + ".bn2", channels);
  b3_ = nn::BatchNorm2d(ps, name + ".bn3", channels);
}

FeatureGrid EnhanceBlock::forward(const FeatureGrid& grid,
                                  const Tensor& occupancy, bool train) {
  RCA_CHECK(occupancy.rank() == 3 && occupancy.dim(1) == grid.values->value.dim(1) &&
                occupancy.dim(2) == grid.values->value.dim(2),
            "enhance: occupancy/grid shape mismatch");
  ad::Var x = ad::concat_channels({grid.values, ad::constant(occupancy)});
  x = ad::relu(b1_.forward(c1_.forward(x), train));
  x = ad::relu(b2_.forward(c2_.forward(x), train));
  x = ad::relu(b3_.forward(c3_.forward(x), train));
  return FeatureGrid{x, grid.spec};
}

ad::Var kd_loss(const FeatureGrid& f_er, const FeatureGrid& f_r) {
  RCA_CHECK(f_er.values->value.same_shape(f_r.values->value),
            "kd_loss: shape mismatch");
  return ad::mean_abs_diff(ad::detach(f_er.values), f_r.values);
}

}  // namespace rcalign
