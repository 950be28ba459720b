#pragma once

#include <string>

#include "rcalign/detect.hpp"
#include "rcalign/scene.hpp"

namespace rcalign {

struct ModelConfig {
  int query_dim = 64;
  int heads = 4;
  int samples = 8;
  int layers = 2;
  int radar_queries = 8;
  int initial_queries = 112;
  int temporal_queries = 0;
  int bev_channels = 32;
  int img_channels = 32;
  int ffn_hidden = 128;
  double logit_scale_init = 14.285714285714286;  // 1/0.07
};

struct OptimConfig {
  double lr = 4e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double cosine_final = 0.05;  // lr floor as a fraction of the base lr
  double grad_clip = 10.0;
  int batch_size = 4;
  int iterations = 1000;
  int checkpoint_every = 0;  // 0 = final only
  int log_every = 10;
};

// Pipeline switches mirroring the component study: DA enables the radar
// aggregation route, SDA the second (image-first) route, CL the alignment
// loss, RH the auxiliary radar head (and with it radar queries), RFE the
// occupancy/enhancement block, SRH the shared second head, KD the
// distillation loss.
struct AblationConfig {
  bool radar_route = true;
  bool second_route = true;
  bool contrastive = true;
  bool radar_head = true;
  bool rfe = true;
  bool second_radar_head = true;
  bool kd = true;
  std::string sampling_method = "topk";       // random | fps | topk
  std::string alignment_loss = "contrastive"; // l1 | cosine | contrastive
};

struct ExperimentConfig {
  uint64_t seed = 0;
  SceneConfig scene;
  GridSpec grid;
  ModelConfig model;
  LossWeights loss;
  TaskLossWeights task;
  MatchWeights match;
  OptimConfig optim;
  AblationConfig ablation;

  void validate() const;
};

// Strict JSON: unknown keys anywhere are an error; missing keys fall back
// to defaults. serialize(parse(s)) == serialize(parse(serialize(parse(s)))).
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

SamplingMethod sampling_method_from_string(const std::string& s);

}  // namespace rcalign
