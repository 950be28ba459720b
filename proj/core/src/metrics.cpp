#include "rcalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rcalign/dataset.hpp"
#include "rcalign/workers.hpp"
#include "json.hpp"

namespace rcalign {

double average_precision(const std::vector<EvalBox>& preds,
                         const std::vector<EvalBox>& gts, double threshold,
                         std::vector<double>* tp_dists,
                         std::vector<double>* tp_vel_errs) {
  if (gts.empty()) return 0.0;
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (preds[static_cast<size_t>(a)].score != preds[static_cast<size_t>(b)].score)
      return preds[static_cast<size_t>(a)].score >
             preds[static_cast<size_t>(b)].score;
    return a < b;
  });

  std::vector<char> gt_used(gts.size(), 0);
  std::vector<char> tp(preds.size(), 0);
  for (int oi : order) {
    const auto& p = preds[static_cast<size_t>(oi)];
    int best = -1;
    double best_d = threshold;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g]) continue;
      if (gts[g].sample != p.sample || gts[g].cls != p.cls) continue;
      double d = std::hypot(gts[g].x - p.x, gts[g].y - p.y);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      gt_used[static_cast<size_t>(best)] = 1;
      tp[static_cast<size_t>(oi)] = 1;
      if (tp_dists) tp_dists->push_back(best_d);
      if (tp_vel_errs)
        tp_vel_errs->push_back(
            std::hypot(gts[static_cast<size_t>(best)].vx - p.vx,
                       gts[static_cast<size_t>(best)].vy - p.vy));
    }
  }

  // precision in sorted order, then right-max interpolation
  int n = static_cast<int>(order.size());
  std::vector<double> prec(static_cast<size_t>(n));
  int tp_cum = 0;
  for (int i = 0; i < n; ++i) {
    if (tp[static_cast<size_t>(order[static_cast<size_t>(i)])]) ++tp_cum;
    prec[static_cast<size_t>(i)] = static_cast<double>(tp_cum) / (i + 1);
  }
  double ap = 0.0, run_max = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    run_max = std::max(run_max, prec[static_cast<size_t>(i)]);
    if (tp[static_cast<size_t>(order[static_cast<size_t>(i)])]) ap += run_max;
  }
  return ap / static_cast<double>(gts.size());
}

MetricsReport compute_metrics(const std::vector<EvalBox>& preds,
                              const std::vector<EvalBox>& gts,
                              int num_classes) {
  MetricsReport rep;
  const double thresholds[] = {0.5, 1.0, 2.0, 4.0};

  std::vector<std::vector<EvalBox>> preds_by_cls(
      static_cast<size_t>(num_classes)),
      gts_by_cls(static_cast<size_t>(num_classes));
  for (const auto& p : preds)
    if (p.cls >= 0 && p.cls < num_classes)
      preds_by_cls[static_cast<size_t>(p.cls)].push_back(p);
  for (const auto& g : gts)
    if (g.cls >= 0 && g.cls < num_classes)
      gts_by_cls[static_cast<size_t>(g.cls)].push_back(g);

  std::vector<double> tp_dists, tp_vel_errs;
  double map_sum = 0.0;
  for (double th : thresholds) {
    double ap_sum = 0.0;
    int n_cls_present = 0;
    for (int c = 0; c < num_classes; ++c) {
      if (gts_by_cls[static_cast<size_t>(c)].empty()) continue;
      ++n_cls_present;
      double ap;
      if (th == 2.0) {
        ap = average_precision(preds_by_cls[static_cast<size_t>(c)],
                               gts_by_cls[static_cast<size_t>(c)], th,
                               &tp_dists, &tp_vel_errs);
        rep.per_class_ap["class_" + std::to_string(c)] = ap;
      } else {
        ap = average_precision(preds_by_cls[static_cast<size_t>(c)],
                               gts_by_cls[static_cast<size_t>(c)], th);
      }
      ap_sum += ap;
    }
    double m = n_cls_present > 0 ? ap_sum / n_cls_present : 0.0;
    char key[16];
    std::snprintf(key, sizeof(key), "%.1f", th);
    rep.map_per_threshold[key] = m;
    map_sum += m;
    if (th == 2.0) rep.map_2m = m;
  }
  rep.map = map_sum / 4.0;

  if (!tp_dists.empty()) {
    rep.mate = std::accumulate(tp_dists.begin(), tp_dists.end(), 0.0) /
               static_cast<double>(tp_dists.size());
    rep.mave =
        std::accumulate(tp_vel_errs.begin(), tp_vel_errs.end(), 0.0) /
        static_cast<double>(tp_vel_errs.size());
  }
  return rep;
}

MetricsReport evaluate_model(Model& model,
                             const std::vector<SceneSequence>& seqs,
                             int num_workers) {
  RCA_CHECK(!seqs.empty(), "evaluate: empty dataset split");
  int n = static_cast<int>(seqs.size());
  const auto& cfg = model.config();

  struct PerSample {
    std::vector<EvalBox> preds, gts;
    double task = 0, rh1 = 0, rh2 = 0, align = 0, kd = 0, total = 0;
  };
  std::vector<PerSample> results(static_cast<size_t>(n));

  parallel_for(n, num_workers, [&](int i) {
    const SceneSequence& seq = seqs[static_cast<size_t>(i)];
    int fi = static_cast<int>(seq.frames.size()) - 1;
    SampleInput sample = make_sample(seq, fi, cfg);
    Rng sel_rng(cfg.seed ^ (0xabcdefULL + static_cast<uint64_t>(i)));
    ForwardOutput out = model.forward(sample, /*train=*/false, &sel_rng);
    PerSample& r = results[static_cast<size_t>(i)];
    for (const auto& d : out.detections.items) {
      EvalBox b;
      b.sample = i;
      b.cls = d.category;
      b.score = d.score;
      b.x = d.center.x;
      b.y = d.center.y;
      b.vx = d.vx;
      b.vy = d.vy;
      r.preds.push_back(b);
    }
    for (const auto& g : sample.gts) {
      EvalBox b;
      b.sample = i;
      b.cls = g.category;
      b.x = g.center.x;
      b.y = g.center.y;
      b.vx = g.vx;
      b.vy = g.vy;
      r.gts.push_back(b);
    }
    r.task = out.loss_task;
    r.rh1 = out.loss_rh1;
    r.rh2 = out.loss_rh2;
    r.align = out.loss_align;
    r.kd = out.loss_kd;
    r.total = out.loss_total;
  });

  std::vector<EvalBox> preds, gts;
  double task = 0, rh1 = 0, rh2 = 0, align = 0, kd = 0, total = 0;
  for (const auto& r : results) {
    preds.insert(preds.end(), r.preds.begin(), r.preds.end());
    gts.insert(gts.end(), r.gts.begin(), r.gts.end());
    task += r.task;
    rh1 += r.rh1;
    rh2 += r.rh2;
    align += r.align;
    kd += r.kd;
    total += r.total;
  }
  MetricsReport rep = compute_metrics(preds, gts, cfg.scene.num_classes);
  rep.num_samples = n;
  rep.loss_components["task"] = task / n;
  rep.loss_components["rh1"] = rh1 / n;
  rep.loss_components["rh2"] = rh2 / n;
  rep.loss_components["align"] = align / n;
  rep.loss_components["kd"] = kd / n;
  rep.loss_components["total"] = total / n;
  return rep;
}

MetricsReport evaluate_dir(Model& model, const std::string& data_dir,
                           int num_workers) {
  auto names = read_manifest(data_dir);
  RCA_CHECK(!names.empty(), "evaluate: empty dataset split");
  std::vector<SceneSequence> seqs;
  seqs.reserve(names.size());
  for (const auto& name : names) seqs.push_back(load_sequence(data_dir, name));
  return evaluate_model(model, seqs, num_workers);
}

std::string metrics_to_json(const MetricsReport& m) {
  nlohmann::json j;
  j["map"] = m.map;
  j["map_per_threshold"] = m.map_per_threshold;
  j["map_2m"] = m.map_2m;
  j["mate"] = m.mate;
  j["mave"] = m.mave;
  j["per_class_ap"] = m.per_class_ap;
  j["loss_components"] = m.loss_components;
  j["num_samples"] = m.num_samples;
  return j.dump(2) + "\n";
}

}  // namespace rcalign
