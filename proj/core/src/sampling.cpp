#include "rcalign/sampling.hpp"

#include <cmath>

namespace rcalign {

namespace {

void make_heads(nn::ParamStore& ps, const std::string& name, int dim,
                int value_channels, const DeformAttnConfig& cfg, Rng& rng,
                std::vector<ad::Var>& value_proj,
                std::vector<ad::Var>& out_proj) {
  RCA_CHECK(dim % cfg.heads == 0, "deform attn: dim must divide by heads");
  int dv = dim / cfg.heads;
  for (int m = 0; m < cfg.heads; ++m) {
    value_proj.push_back(
        ps.add(name + ".value.h" + std::to_string(m),
               nn::kaiming_uniform({value_channels, dv}, value_channels, rng)));
    out_proj.push_back(ps.add(name + ".out.h" + std::to_string(m),
                              nn::kaiming_uniform({dv, dim}, dv, rng)));
  }
}

// z with attention term masked per row, plus residual/wrapper handling
ad::Var finish_block(const ad::Var& z, const ad::Var& attn,
                     const std::vector<double>& vis_mask, bool wrap,
                     const nn::LayerNorm& ln1, const nn::LayerNorm& ln2,
                     const nn::Ffn& ffn) {
  ad::Var attn_vis = attn;
  bool any_hidden = false;
  for (double m : vis_mask)
    if (m == 0.0) any_hidden = true;
  if (any_hidden) attn_vis = ad::mul_rows(attn, vis_mask);
  if (!wrap) {
    if (!any_hidden) return attn_vis;
    std::vector<double> inv(vis_mask.size());
    for (size_t i = 0; i < vis_mask.size(); ++i) inv[i] = 1.0 - vis_mask[i];
    return ad::add(attn_vis, ad::mul_rows(z, inv));
  }
  ad::Var z1 = ln1.forward(ad::add(z, attn_vis));
  return ln2.forward(ad::add(z1, ffn.forward(z1)));
}

}  // namespace

Vec3 ref_to_metric(const GridSpec& spec, double rx, double ry, double rz) {
  return {spec.xmin + rx * (spec.xmax - spec.xmin),
          spec.ymin + ry * (spec.ymax - spec.ymin),
          spec.z_min + rz * (spec.z_max - spec.z_min)};
}

BevCrossAttn::BevCrossAttn(nn::ParamStore& ps, const std::string& name,
                           int dim, int value_channels,
                           const DeformAttnConfig& cfg_, Rng& rng)
    : cfg(cfg_) {
  offset_pred =
      nn::Linear(ps, name + ".offset", dim, cfg.heads * cfg.samples * 2, rng,
                 /*zero_init=*/true);
  weight_pred = nn::Linear(ps, name + ".weight", dim,
                           cfg.heads * cfg.samples, rng, /*zero_init=*/true);
  make_heads(ps, name, dim, value_channels, cfg, rng, value_proj, out_proj);
  out_bias = ps.add(name + ".bias", Tensor::zeros({dim}));
  ln1 = nn::LayerNorm(ps, name + ".ln1", dim);
  ln2 = nn::LayerNorm(ps, name + ".ln2", dim);
  ffn = nn::Ffn(ps, name + ".ffn", dim, cfg.ffn_hidden, rng);
}

ad::Var BevCrossAttn::forward(const ad::Var& z, const QuerySet& queries,
                              const FeatureGrid& grid) const {
  int n = z->value.dim(0);
  int k = cfg.samples;
  RCA_CHECK(queries.ref_points->value.dim(0) == n,
            "deform_attn_bev: query/reference count mismatch");
  RCA_CHECK(grid.values->value.dim(0) == value_proj[0]->value.dim(0),
            "deform_attn_bev: grid channel mismatch");

  // reference points enter sampling as values; gradients reach learned
  // references through the detection head decode instead
  Tensor ref_cells({n, 2});
  for (int q = 0; q < n; ++q) {
    Vec3 p = ref_to_metric(grid.spec, queries.ref_points->value.at2(q, 0),
                           queries.ref_points->value.at2(q, 1),
                           queries.ref_points->value.at2(q, 2));
    ref_cells.at2(q, 0) = grid.spec.to_cell_coord_x(p.x);
    ref_cells.at2(q, 1) = grid.spec.to_cell_coord_y(p.y);
  }
  ad::Var ref_rep = ad::repeat_rows(ad::constant(std::move(ref_cells)), k);

  ad::Var off_raw = offset_pred.forward(z);   // [N, M*K*2]
  ad::Var a_raw = weight_pred.forward(z);     // [N, M*K]

  ad::Var attn;
  for (int m = 0; m < cfg.heads; ++m) {
    ad::Var off_m = ad::reshape(
        ad::slice_cols(off_raw, m * k * 2, (m + 1) * k * 2), {n * k, 2});
    ad::Var a_m = ad::softmax_rows(ad::slice_cols(a_raw, m * k, (m + 1) * k));
    ad::Var coords = ad::add(ref_rep, off_m);
    ad::Var sampled = ad::bilinear_sample(grid.values, coords);  // [N*K, C]
    ad::Var val = ad::matmul(sampled, value_proj[static_cast<size_t>(m)]);
    ad::Var pooled = ad::weighted_sum_k(val, a_m);               // [N, dv]
    ad::Var out_m = ad::matmul(pooled, out_proj[static_cast<size_t>(m)]);
    attn = attn ? ad::add(attn, out_m) : out_m;
  }
  attn = ad::add_rowvec(attn, out_bias);

  std::vector<double> vis(static_cast<size_t>(n), 1.0);
  return finish_block(z, attn, vis, cfg.wrap, ln1, ln2, ffn);
}

PvCrossAttn::PvCrossAttn(nn::ParamStore& ps, const std::string& name, int dim,
                         int value_channels, const DeformAttnConfig& cfg_,
                         Rng& rng)
    : cfg(cfg_) {
  offset_pred =
      nn::Linear(ps, name + ".offset", dim, cfg.heads * cfg.samples * 2, rng,
                 /*zero_init=*/true);
  weight_pred = nn::Linear(ps, name + ".weight", dim,
                           cfg.heads * cfg.samples, rng, /*zero_init=*/true);
  make_heads(ps, name, dim, value_channels, cfg, rng, value_proj, out_proj);
  out_bias = ps.add(name + ".bias", Tensor::zeros({dim}));
  ln1 = nn::LayerNorm(ps, name + ".ln1", dim);
  ln2 = nn::LayerNorm(ps, name + ".ln2", dim);
  ffn = nn::Ffn(ps, name + ".ffn", dim, cfg.ffn_hidden, rng);
}

ad::Var PvCrossAttn::forward(const ad::Var& z, const QuerySet& queries,
                             const MultiViewFeatures& views,
                             const GridSpec& spec) const {
  int n = z->value.dim(0);
  int k = cfg.samples;
  int n_views = static_cast<int>(views.views.size());
  RCA_CHECK(n_views > 0, "deform_attn_pv: no views");
  RCA_CHECK(views.channels() == value_proj[0]->value.dim(0),
            "deform_attn_pv: view channel mismatch");

  // project each reference into each view; invisible entries get a far
  // sentinel so sampling and its gradients vanish there
  constexpr double kSentinel = -1e6;
  std::vector<Tensor> proj(static_cast<size_t>(n_views),
                           Tensor({n, 2}));
  std::vector<std::vector<double>> vis_v(
      static_cast<size_t>(n_views), std::vector<double>(static_cast<size_t>(n), 0.0));
  std::vector<double> vis_count(static_cast<size_t>(n), 0.0);
  for (int q = 0; q < n; ++q) {
    Vec3 p = ref_to_metric(spec, queries.ref_points->value.at2(q, 0),
                           queries.ref_points->value.at2(q, 1),
                           queries.ref_points->value.at2(q, 2));
    for (int v = 0; v < n_views; ++v) {
      const auto& cam = views.rig.views[static_cast<size_t>(v)];
      Vec3 c = cam.world_to_camera(p);
      double u = 0.0, vv = 0.0;
      bool visible = c.z > 1e-3;
      if (visible) {
        u = cam.fx * c.x / c.z + cam.cx;
        vv = cam.fy * c.y / c.z + cam.cy;
        visible = u >= 0.0 && u < views.rig.image_width && vv >= 0.0 &&
                  vv < views.rig.image_height;
      }
      if (visible) {
        proj[static_cast<size_t>(v)].at2(q, 0) = u / views.stride - 0.5;
        proj[static_cast<size_t>(v)].at2(q, 1) = vv / views.stride - 0.5;
        vis_v[static_cast<size_t>(v)][static_cast<size_t>(q)] = 1.0;
        vis_count[static_cast<size_t>(q)] += 1.0;
      } else {
        proj[static_cast<size_t>(v)].at2(q, 0) = kSentinel;
        proj[static_cast<size_t>(v)].at2(q, 1) = kSentinel;
      }
    }
  }
  std::vector<double> inv_count(static_cast<size_t>(n));
  std::vector<double> vis01(static_cast<size_t>(n));
  for (int q = 0; q < n; ++q) {
    vis01[static_cast<size_t>(q)] = vis_count[static_cast<size_t>(q)] > 0.0 ? 1.0 : 0.0;
    inv_count[static_cast<size_t>(q)] =
        vis_count[static_cast<size_t>(q)] > 0.0
            ? 1.0 / vis_count[static_cast<size_t>(q)]
            : 0.0;
  }

  ad::Var off_raw = offset_pred.forward(z);
  ad::Var a_raw = weight_pred.forward(z);

  ad::Var attn;
  for (int m = 0; m < cfg.heads; ++m) {
    ad::Var off_m = ad::reshape(
        ad::slice_cols(off_raw, m * k * 2, (m + 1) * k * 2), {n * k, 2});
    ad::Var a_m = ad::softmax_rows(ad::slice_cols(a_raw, m * k, (m + 1) * k));
    ad::Var pooled_sum;
    for (int v = 0; v < n_views; ++v) {
      ad::Var coords = ad::add(
          ad::repeat_rows(ad::constant(proj[static_cast<size_t>(v)]), k),
          off_m);
      ad::Var sampled =
          ad::bilinear_sample(views.views[static_cast<size_t>(v)], coords);
      ad::Var val = ad::matmul(sampled, value_proj[static_cast<size_t>(m)]);
      ad::Var pooled = ad::weighted_sum_k(val, a_m);
      pooled_sum = pooled_sum ? ad::add(pooled_sum, pooled) : pooled;
    }
    ad::Var pooled_avg = ad::mul_rows(pooled_sum, inv_count);
    ad::Var out_m = ad::matmul(pooled_avg, out_proj[static_cast<size_t>(m)]);
    attn = attn ? ad::add(attn, out_m) : out_m;
  }
  attn = ad::add_rowvec(attn, out_bias);
  return finish_block(z, attn, vis01, cfg.wrap, ln1, ln2, ffn);
}

}  // namespace rcalign
