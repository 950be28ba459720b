#pragma once

#include "rcalign/radar_prep.hpp"
#include "rcalign/scene.hpp"

namespace rcalign {

// CenterNet-style auxiliary head reduced to heatmap + center offsets.
// The same instance (same parameters) serves both the raw radar grid and
// the enhanced grid.
struct RadarHeadOutput {
  ad::Var heatmap_logits;  // [n_cls, H, W]
  ad::Var heatmap;         // sigmoid of the above
  ad::Var offsets;         // [2, H, W] sub-cell (x, y) offsets in cells
};

class RadarHead {
 public:
  RadarHead() = default;
  RadarHead(nn::ParamStore& ps, const std::string& name, int in_channels,
            int num_classes, Rng& rng);
  RadarHeadOutput forward(const FeatureGrid& grid) const;
  int num_classes() const { return hm_.w->value.dim(0); }

 private:
  nn::Conv2d trunk_, hm_, off_;
};

// CenterNet-convention supervision: a Gaussian splat of peak 1 per object
// (sigma from the box footprint, >= 1 cell), overlaps combined by max;
// offset targets live only at center cells.
struct HeatmapTargets {
  Tensor heatmap;   // [n_cls, H, W]
  Tensor offsets;   // [2, H, W], in cells
  Tensor mask;      // [H, W], 1 at center cells
  int num_pos = 0;
};
HeatmapTargets heatmap_targets(const std::vector<WorldObject>& objects,
                               const GridSpec& spec, int num_classes);

// penalty-reduced focal on the heatmap + masked L1 on the offsets
ad::Var radar_head_loss(const RadarHeadOutput& pred,
                        const HeatmapTargets& targets);

enum class SamplingMethod { kTopk, kRandom, kFps };

struct RadarQuerySelection {
  std::vector<int> cells;       // flat grid cell per query (embedding gather)
  std::vector<double> scores;   // heatmap score at the chosen cell
  Tensor ref_points;            // [k, 3] normalized
};

// Top-k selects the k highest class-max heatmap cells (ties -> lowest
// flat index) and refines each cell center by the predicted offset.
// Random/FPS sample merged-cloud points instead (FPS seeded at the point
// under the strongest heatmap cell). k > available is clamped with a
// warning to stderr.
RadarQuerySelection select_radar_queries(const Tensor& heatmap,
                                         const Tensor& offsets,
                                         const MergedCloud& cloud,
                                         const GridSpec& spec, int k,
                                         SamplingMethod method, Rng* rng);

// binary occupancy of predicted box centers; out-of-extent centers drop
Tensor occupancy_project(const std::vector<Vec3>& centers,
                         const GridSpec& spec);

// 3 x (conv -> batch norm -> ReLU) over concat(grid, occupancy); output
// channel count equals the input grid's.
class EnhanceBlock {
 public:
  EnhanceBlock() = default;
  EnhanceBlock(nn::ParamStore& ps, const std::string& name, int channels,
               Rng& rng, int kernel = 3);
  FeatureGrid forward(const FeatureGrid& grid, const Tensor& occupancy,
                      bool train);

 private:
  nn::Conv2d c1_, c2_, c3_;
  nn::BatchNorm2d b1_, b2_, b3_;
};

// mean |f_er - f_r| with the enhanced grid detached as the teacher;
// gradients flow into the radar encoder only
ad::Var kd_loss(const FeatureGrid& f_er, const FeatureGrid& f_r);

}  // namespace rcalign
