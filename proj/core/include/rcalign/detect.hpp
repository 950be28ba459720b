#pragma once

#include "rcalign/radar_prep.hpp"
#include "rcalign/sampling.hpp"
#include "rcalign/scene.hpp"

namespace rcalign {

// decoded, graph-free predictions
struct Detection {
  std::vector<double> probs;  // per class, sigmoid
  Vec3 center;                // meters
  double length = 1.0, width = 1.0, height = 1.0;
  double yaw = 0.0;
  double vx = 0.0, vy = 0.0;
  double score = 0.0;  // max class probability
  int category = 0;
};

struct DetectionSet {
  std::vector<Detection> items;
};

// graph handles kept for the loss
struct DetHeadVars {
  ad::Var class_logits;  // [N, n_cls]
  ad::Var center_norm;   // [N, 3], sigmoid-decoded from the reference
  ad::Var log_size;      // [N, 3]
  ad::Var yaw_sincos;    // [N, 2]
  ad::Var velocity;      // [N, 2]
};

// DETR-style feed-forward head; centers decode as offsets from the query
// reference point in inverse-sigmoid space
class DetectionHead {
 public:
  DetectionHead() = default;
  DetectionHead(nn::ParamStore& ps, const std::string& name, int dim,
                int num_classes, Rng& rng);
  DetHeadVars forward(const ad::Var& z, const ad::Var& ref_points) const;
  int num_classes() const { return cls2_.out_dim(); }

 private:
  nn::Linear cls1_, cls2_, box1_, box2_;
};

DetectionSet decode_detections(const DetHeadVars& head, const GridSpec& spec);

struct MatchWeights {
  double cls = 1.0;
  double center = 5.0;  // on normalized coordinates
};

// cost[p][g] over predictions x ground truths
Tensor build_match_cost(const DetHeadVars& head,
                        const std::vector<WorldObject>& gts,
                        const GridSpec& spec, const MatchWeights& w);

// minimum-cost one-to-one assignment; returns the prediction index per
// ground truth (-1 when there are more gts than predictions). Ties break
// deterministically.
std::vector<int> hungarian_match(const Tensor& cost);

struct TaskLossWeights {
  double cls = 2.0;
  double center = 20.0;  // normalized coords
  double size = 1.0;     // log space
  double yaw = 1.0;      // (sin, cos)
  double vel = 0.5;      // m/s
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;  // fixed at 2 in the implementation
};

// sigmoid focal classification over all queries + L1 regression over
// matched queries, normalized by max(1, #gts)
ad::Var task_loss(const DetHeadVars& head, const std::vector<WorldObject>& gts,
                  const std::vector<int>& assignment, const GridSpec& spec,
                  const TaskLossWeights& w);

struct LossWeights {
  double lambda_rh1 = 1.0;
  double lambda_rh2 = 1.0;
  double lambda_cl = 1.0;
  double lambda_kd = 5.0;
};

// L = L_task + l1*L_RH1 + l2*L_RH2 + l3*L_CL + l4*L_KD. Null components
// are treated as absent (their term is skipped). A non-finite component
// value throws with the component named.
ad::Var total_loss(const ad::Var& task, const ad::Var& rh1, const ad::Var& rh2,
                   const ad::Var& cl, const ad::Var& kd,
                   const LossWeights& w);

}  // namespace rcalign
