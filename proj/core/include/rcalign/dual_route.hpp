#pragma once

#include "rcalign/image_encoder.hpp"
#include "rcalign/sampling.hpp"

namespace rcalign {

// learnable temperature for the contrastive loss, tau = clamp(e^s, 1, 100)
struct LogitScale {
  ad::Var log_tau;

  LogitScale() = default;
  LogitScale(nn::ParamStore& ps, const std::string& name, double init_tau);
  ad::Var tau() const { return ad::clamp(ad::exp_op(log_tau), 1.0, 100.0); }
};

// Symmetric InfoNCE between two query sets that share row order: rows are
// L2-normalized (eps-guarded), logits = z_a z_b^T * tau, targets are the
// diagonal, and the two softmax directions are averaged.
ad::Var contrastive_align(const ad::Var& z_ri, const ad::Var& z_ir,
                          const ad::Var& tau);
// alternatives for the alignment-loss ablation
ad::Var cosine_align(const ad::Var& z_ri, const ad::Var& z_ir);
ad::Var l1_align(const ad::Var& z_ri, const ad::Var& z_ir);

// element-wise addition of the two route outputs
ad::Var fuse(const ad::Var& z_ri, const ad::Var& z_ir);

// concatenation in fixed order (radar, initial, temporal); any group may
// be empty, but not all of them
struct QueryGroup {
  ad::Var embeddings;  // [n, D] (n may be 0 -> pass empty Var)
  ad::Var ref_points;  // [n, 3]
  QuerySource source = QuerySource::kInitial;
  int count() const { return embeddings ? embeddings->value.dim(0) : 0; }
};
QuerySet assemble_queries(const std::vector<QueryGroup>& groups);

// top-M previous fused queries by detection score; reference points are
// the previously predicted centers carried through the ego motion between
// the frames, re-normalized to [0,1]^3. Detached from the old graph.
struct TemporalQueries {
  ad::Var embeddings;  // [M, D] constant
  ad::Var ref_points;  // [M, 3] constant
  int count() const { return embeddings ? embeddings->value.dim(0) : 0; }
};
TemporalQueries propagate_temporal_queries(
    const ad::Var& prev_fused, const std::vector<double>& prev_scores,
    const std::vector<Vec3>& prev_centers, int m, const Se2& prev_ego,
    const Se2& cur_ego, const GridSpec& spec);

// One alignment layer: route A aggregates radar BEV then image PV; route
// B (when enabled) aggregates image PV then radar BEV; outputs fuse by
// addition. With the radar route disabled only the PV aggregation runs.
struct DraLayerConfig {
  bool radar_route = true;
  bool second_route = true;
  DeformAttnConfig attn;
};

struct DraLayerOutput {
  ad::Var fused;
  ad::Var z_ri;     // route A output
  ad::Var z_ir;     // route B output (null when disabled)
  ad::Var z_inter;  // route A after the radar stage (null without radar)
};

class DraLayer {
 public:
  DraLayer() = default;
  DraLayer(nn::ParamStore& ps, const std::string& name, int dim,
           int bev_channels, int img_channels, const DraLayerConfig& cfg,
           Rng& rng);

  DraLayerOutput forward(const ad::Var& z, const QuerySet& queries,
                         const FeatureGrid& grid,
                         const MultiViewFeatures& views) const;

  DraLayerConfig cfg;
  BevCrossAttn bev_a, bev_b;
  PvCrossAttn pv_a, pv_b;
};

}  // namespace rcalign
