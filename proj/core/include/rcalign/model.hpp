#pragma once

#include <optional>

#include "rcalign/config.hpp"
#include "rcalign/detect.hpp"
#include "rcalign/dual_route.hpp"
#include "rcalign/image_encoder.hpp"
#include "rcalign/radar_head.hpp"

namespace rcalign {

// One training/eval sample: the newest frame of a sequence with its radar
// history, everything expressed in that frame's ego coordinates.
struct SampleInput {
  ViewRasters rasters;
  std::vector<std::vector<RadarReturn>> radar_history;  // oldest -> newest
  std::vector<WorldObject> gts;
  double dt = 0.5;
  CameraRig rig;
  Se2 ego;
};

SampleInput make_sample(const SceneSequence& seq, int frame_index,
                        const ExperimentConfig& cfg);

struct ForwardOutput {
  DetHeadVars head;         // final layer
  DetectionSet detections;  // decoded from the final layer
  ad::Var total;            // scalar loss (graph root)
  // component values for logging; absent components report 0
  double loss_total = 0.0;
  double loss_task = 0.0;
  double loss_rh1 = 0.0;
  double loss_rh2 = 0.0;
  double loss_align = 0.0;
  double loss_kd = 0.0;
  ad::Var fused;            // final fused queries
  ad::Var ref_points;       // reference points used this pass
};

class Model {
 public:
  explicit Model(const ExperimentConfig& cfg);

  // Full pipeline: image encoder -> radar merge/pillars -> radar head ->
  // query selection -> assembled queries -> alignment layers -> detection
  // head -> occupancy -> enhancement -> second head -> distillation ->
  // total loss. Any non-finite intermediate throws naming the stage.
  ForwardOutput forward(const SampleInput& sample, bool train,
                        Rng* sampler_rng = nullptr,
                        const TemporalQueries* temporal = nullptr);

  TemporalQueries make_temporal(const ForwardOutput& prev, const Se2& prev_ego,
                                const Se2& cur_ego) const;

  nn::ParamStore& params() { return params_; }
  const ExperimentConfig& config() const { return cfg_; }

 private:
  ExperimentConfig cfg_;
  nn::ParamStore params_;
  ViewEncoder imagenc_;
  PillarEncoder pillar_;
  RadarHead radar_head_;
  std::vector<DraLayer> layers_;
  DetectionHead det_head_;
  EnhanceBlock enhance_;
  LogitScale logit_scale_;
  nn::Linear radar_query_proj_;
  ad::Var init_query_emb_;      // [n_init, D]
  ad::Var init_query_ref_raw_;  // [n_init, 3], sigmoid -> normalized ref
};

}  // namespace rcalign
