#include "rcalign/dual_route.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rcalign {

LogitScale::LogitScale(nn::ParamStore& ps, const std::string& name,
                       double init_tau) {
  log_tau = ps.add(name + ".log_tau", Tensor::scalar(std::log(init_tau)));
}

ad::Var contrastive_align(const ad::Var& z_ri, const ad::Var& z_ir,
                          const ad::Var& tau) {
  RCA_CHECK(z_ri->value.same_shape(z_ir->value),
            "contrastive_align: shape mismatch");
  RCA_CHECK(z_ri->value.rank() == 2 && z_ri->value.dim(0) > 0,
            "contrastive_align: need [N,D] with N > 0");
  ad::Var a = ad::l2_normalize_rows(z_ri, 1e-8);
  ad::Var b = ad::l2_normalize_rows(z_ir, 1e-8);
  ad::Var logits = ad::scale_by(ad::matmul(a, ad::transpose(b)), tau);
  ad::Var nll_ab =
      ad::neg(ad::mean_all_sorted(ad::gather_diag(ad::log_softmax_rows(logits))));
  ad::Var nll_ba = ad::neg(ad::mean_all_sorted(
      ad::gather_diag(ad::log_softmax_rows(ad::transpose(logits)))));
  return ad::mul_scalar(ad::add(nll_ab, nll_ba), 0.5);
}

ad::Var cosine_align(const ad::Var& z_ri, const ad::Var& z_ir) {
  RCA_CHECK(z_ri->value.same_shape(z_ir->value), "cosine_align: shape mismatch");
  ad::Var a = ad::l2_normalize_rows(z_ri, 1e-8);
  ad::Var b = ad::l2_normalize_rows(z_ir, 1e-8);
  // mean over rows of (1 - cos)
  ad::Var dots = ad::sum_all(ad::mul(a, b));
  int n = z_ri->value.dim(0);
  return ad::add_scalar(ad::mul_scalar(dots, -1.0 / n), 1.0);
}

ad::Var l1_align(const ad::Var& z_ri, const ad::Var& z_ir) {
  return ad::mean_abs_diff(z_ri, z_ir);
}

ad::Var fuse(const ad::Var& z_ri, const ad::Var& z_ir) {
  RCA_CHECK(z_ri->value.same_shape(z_ir->value), "fuse: shape mismatch");
  return ad::add(z_ri, z_ir);
}

QuerySet assemble_queries(const std::vector<QueryGroup>& groups) {
  std::vector<ad::Var> embs, refs;
  std::vector<QuerySource> prov;
  int dim = -1;
  for (const auto& g : groups) {
    if (g.count() == 0) continue;
    RCA_CHECK(dim < 0 || g.embeddings->value.dim(1) == dim,
              "assemble_queries: embedding dim mismatch");
    dim = g.embeddings->value.dim(1);
    embs.push_back(g.embeddings);
    refs.push_back(g.ref_points);
    for (int i = 0; i < g.count(); ++i) prov.push_back(g.source);
  }
  RCA_CHECK(!embs.empty(), "assemble_queries: at least one query required");
  QuerySet qs;
  qs.embeddings = embs.size() == 1 ? embs[0] : ad::concat_rows(embs);
  qs.ref_points = refs.size() == 1 ? refs[0] : ad::concat_rows(refs);
  qs.provenance = std::move(prov);
  return qs;
}

TemporalQueries propagate_temporal_queries(
    const ad::Var& prev_fused, const std::vector<double>& prev_scores,
    const std::vector<Vec3>& prev_centers, int m, const Se2& prev_ego,
    const Se2& cur_ego, const GridSpec& spec) {
  TemporalQueries out;
  if (m <= 0 || !prev_fused) return out;
  int n = prev_fused->value.dim(0);
  RCA_CHECK(static_cast<int>(prev_scores.size()) == n &&
                static_cast<int>(prev_centers.size()) == n,
            "propagate_temporal_queries: score/center count mismatch");
  m = std::min(m, n);
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return prev_scores[static_cast<size_t>(a)] >
           prev_scores[static_cast<size_t>(b)];
  });

  int dim = prev_fused->value.dim(1);
  Tensor emb({m, dim});
  Tensor ref({m, 3});
  for (int i = 0; i < m; ++i) {
    int src = order[static_cast<size_t>(i)];
    for (int d = 0; d < dim; ++d)
      emb.at2(i, d) = prev_fused->value.at2(src, d);
    Vec3 c = se2_transfer(prev_centers[static_cast<size_t>(src)], prev_ego,
                          cur_ego);
    auto norm01 = [](double v, double lo, double hi) {
      double r = (v - lo) / (hi - lo);
      return std::min(std::max(r, 0.0), 1.0);
    };
    ref.at2(i, 0) = norm01(c.x, spec.xmin, spec.xmax);
    ref.at2(i, 1) = norm01(c.y, spec.ymin, spec.ymax);
    ref.at2(i, 2) = norm01(c.z, spec.z_min, spec.z_max);
  }
  out.embeddings = ad::constant(std::move(emb));
  out.ref_points = ad::constant(std::move(ref));
  return out;
}

DraLayer::DraLayer(nn::ParamStore& ps, const std::string& name, int dim,
                   int bev_channels, int img_channels,
                   const DraLayerConfig& cfg_, Rng& rng)
    : cfg(cfg_) {
  pv_a = PvCrossAttn(ps, name + ".pv_a", dim, img_channels, cfg.attn, rng);
  if (cfg.radar_route) {
    bev_a = BevCrossAttn(ps, name + ".bev_a", dim, bev_channels, cfg.attn, rng);
    if (cfg.second_route) {
      pv_b = PvCrossAttn(ps, name + ".pv_b", dim, img_channels, cfg.attn, rng);
      bev_b =
          BevCrossAttn(ps, name + ".bev_b", dim, bev_channels, cfg.attn, rng);
    }
  }
}

DraLayerOutput DraLayer::forward(const ad::Var& z, const QuerySet& queries,
                                 const FeatureGrid& grid,
                                 const MultiViewFeatures& views) const {
  DraLayerOutput out;
  if (!cfg.radar_route) {
    out.z_ri = pv_a.forward(z, queries, views, grid.spec);
    out.fused = out.z_ri;
    return out;
  }
  out.z_inter = bev_a.forward(z, queries, grid);
  out.z_ri = pv_a.forward(out.z_inter, queries, views, grid.spec);
  if (!cfg.second_route) {
    out.fused = out.z_ri;
    return out;
  }
  ad::Var z_i = pv_b.forward(z, queries, views, grid.spec);
  out.z_ir = bev_b.forward(z_i, queries, grid);
  out.fused = fuse(out.z_ri, out.z_ir);
  return out;
}

}  // namespace rcalign
