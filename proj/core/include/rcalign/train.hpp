#pragma once

#include <functional>

#include "rcalign/metrics.hpp"
#include "rcalign/optim.hpp"

namespace rcalign {

struct TrainResult {
  std::string checkpoint_path;
  int iterations_run = 0;
  double initial_smoothed_loss = 0.0;
  double final_smoothed_loss = 0.0;
  std::vector<double> smoothed_history;  // one entry per iteration
};

// Deterministic training: shuffled minibatches, AdamW with cosine-annealed
// learning rate, per-iteration loss log, atomic checkpoint writes. The
// optional probe runs every probe_every iterations and can stop training
// early (used by convergence tests); probe_every <= 0 disables it.
TrainResult train_model(
    const ExperimentConfig& cfg, const std::string& data_dir,
    const std::string& out_dir,
    const std::function<bool(int, Model&, double)>& probe = nullptr,
    int probe_every = 0);

}  // namespace rcalign
