#pragma once

#include <map>
#include <string>

#include "rcalign/model.hpp"

namespace rcalign {

struct MetricsReport {
  double map = 0.0;  // mean over thresholds {0.5, 1, 2, 4} m
  std::map<std::string, double> map_per_threshold;
  double map_2m = 0.0;
  double mate = 1.0;  // mean translation error over TPs at 2 m
  double mave = 1.0;  // mean velocity error over TPs at 2 m
  std::map<std::string, double> per_class_ap;  // AP at 2 m
  std::map<std::string, double> loss_components;
  int num_samples = 0;
};

// flattened box for the matching protocol (graph-free)
struct EvalBox {
  int sample = 0;
  int cls = 0;
  double score = 1.0;
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;
};

// Greedy center-distance matching in confidence order: a prediction
// matches the nearest unmatched ground truth of its class in its sample
// when their 2D distance is below the threshold. AP integrates the
// precision-recall curve with right-max interpolated precision.
double average_precision(const std::vector<EvalBox>& preds,
                         const std::vector<EvalBox>& gts, double threshold,
                         std::vector<double>* tp_dists = nullptr,
                         std::vector<double>* tp_vel_errs = nullptr);

MetricsReport compute_metrics(const std::vector<EvalBox>& preds,
                              const std::vector<EvalBox>& gts,
                              int num_classes);

// runs the model over every sequence's newest frame
MetricsReport evaluate_model(Model& model,
                             const std::vector<SceneSequence>& seqs,
                             int num_workers = 0);
MetricsReport evaluate_dir(Model& model, const std::string& data_dir,
                           int num_workers = 0);

std::string metrics_to_json(const MetricsReport& m);

}  // namespace rcalign
