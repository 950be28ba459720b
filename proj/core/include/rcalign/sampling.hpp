#pragma once

#include <string>
#include <vector>

#include "rcalign/nn.hpp"
#include "rcalign/radar_prep.hpp"

namespace rcalign {

enum class QuerySource { kRadar, kInitial, kTemporal };

// Sparse queries: embeddings plus normalized 3D reference points in
// [0,1]^3 (x,y over the grid extent, z over the grid z range).
struct QuerySet {
  ad::Var embeddings;  // [N, D]
  ad::Var ref_points;  // [N, 3]
  std::vector<QuerySource> provenance;

  int count() const { return embeddings->value.dim(0); }
  int dim() const { return embeddings->value.dim(1); }
};

struct MultiViewFeatures {
  std::vector<ad::Var> views;  // per view [C, h, w], all alike
  CameraRig rig;
  int stride = 8;  // input pixels per feature cell

  int channels() const { return views.empty() ? 0 : views[0]->value.dim(0); }
};

struct DeformAttnConfig {
  int heads = 4;
  int samples = 8;
  int ffn_hidden = 128;
  // residual + layer norm + feed-forward wrapper around the attention;
  // disabled only in tests that probe the raw operator
  bool wrap = true;
};

// denormalize a reference point (values, no graph)
Vec3 ref_to_metric(const GridSpec& spec, double rx, double ry, double rz);

// Multi-head deformable attention over one BEV grid. Offsets are
// predicted in grid cells, attention weights softmax over the K samples
// of each head.
class BevCrossAttn {
 public:
  BevCrossAttn() = default;
  BevCrossAttn(nn::ParamStore& ps, const std::string& name, int dim,
               int value_channels, const DeformAttnConfig& cfg, Rng& rng);

  ad::Var forward(const ad::Var& z, const QuerySet& queries,
                  const FeatureGrid& grid) const;

  DeformAttnConfig cfg;
  nn::Linear offset_pred, weight_pred;
  std::vector<ad::Var> value_proj;  // per head [C, dv]
  std::vector<ad::Var> out_proj;    // per head [dv, D]
  ad::Var out_bias;                 // [D]
  nn::LayerNorm ln1, ln2;
  nn::Ffn ffn;
};

// Same operator over perspective-view features: each query samples in the
// views its reference point projects into (positive depth, inside the
// image); visible views are averaged; with no visible view the sampled
// term is zero and only the residual path remains.
class PvCrossAttn {
 public:
  PvCrossAttn() = default;
  PvCrossAttn(nn::ParamStore& ps, const std::string& name, int dim,
              int value_channels, const DeformAttnConfig& cfg, Rng& rng);

  ad::Var forward(const ad::Var& z, const QuerySet& queries,
                  const MultiViewFeatures& views, const GridSpec& spec) const;

  DeformAttnConfig cfg;
  nn::Linear offset_pred, weight_pred;
  std::vector<ad::Var> value_proj;
  std::vector<ad::Var> out_proj;
  ad::Var out_bias;
  nn::LayerNorm ln1, ln2;
  nn::Ffn ffn;
};

}  // namespace rcalign
