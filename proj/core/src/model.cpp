#include "rcalign/model.hpp"

#include <cmath>

namespace rcalign {

namespace {

void check_finite(const ad::Var& v, const char* stage) {
  if (!v->value.all_finite())
    throw std::runtime_error(std::string("forward: non-finite values at stage ") +
                             stage);
}

}  // namespace

SampleInput make_sample(const SceneSequence& seq, int frame_index,
                        const ExperimentConfig& cfg) {
  RCA_CHECK(frame_index >= 0 &&
                frame_index < static_cast<int>(seq.frames.size()),
            "make_sample: frame index out of range");
  const Frame& cur = seq.frames[static_cast<size_t>(frame_index)];
  SampleInput s;
  s.rig = seq.rig;
  s.dt = cfg.scene.frame_dt;
  s.ego = cur.ego;
  uint64_t render_seed =
      seq.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(frame_index + 1));
  s.rasters = render_view_rasters(cur, seq.rig, cfg.scene, render_seed);

  // five-frame history, missing leading frames stay empty, historical
  // points re-expressed in the current ego frame
  constexpr int kHistory = 5;
  for (int k = kHistory - 1; k >= 0; --k) {
    int fi = frame_index - k;
    std::vector<RadarReturn> frame_pts;
    if (fi >= 0) {
      const Frame& f = seq.frames[static_cast<size_t>(fi)];
      frame_pts = f.radar;
      if (f.ego.x != cur.ego.x || f.ego.y != cur.ego.y ||
          f.ego.yaw != cur.ego.yaw) {
        for (auto& r : frame_pts) {
          Vec3 p = se2_transfer({r.x, r.y, r.z}, f.ego, cur.ego);
          r.x = p.x;
          r.y = p.y;
          r.z = p.z;
        }
      }
    }
    s.radar_history.push_back(std::move(frame_pts));
  }

  for (const auto& o : cur.objects)
    if (cfg.grid.contains(o.center.x, o.center.y)) s.gts.push_back(o);
  return s;
}

Model::Model(const ExperimentConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg.seed ^ 0x5deece66dULL);
  int d = cfg.model.query_dim;
  int n_cls = cfg.scene.num_classes;

  imagenc_ = ViewEncoder(params_, "imagenc", cfg.model.img_channels, rng);
  pillar_ = PillarEncoder(params_, "pillar", cfg.model.bev_channels, rng);
  if (cfg.ablation.radar_head)
    radar_head_ = RadarHead(params_, "radar_head", cfg.model.bev_channels,
                            n_cls, rng);

  DraLayerConfig lc;
  lc.radar_route = cfg.ablation.radar_route;
  lc.second_route = cfg.ablation.second_route;
  lc.attn.heads = cfg.model.heads;
  lc.attn.samples = cfg.model.samples;
  lc.attn.ffn_hidden = cfg.model.ffn_hidden;
  for (int l = 0; l < cfg.model.layers; ++l)
    layers_.emplace_back(params_, "dra.l" + std::to_string(l), d,
                         cfg.model.bev_channels, cfg.model.img_channels, lc,
                         rng);

  det_head_ = DetectionHead(params_, "det_head", d, n_cls, rng);
  if (cfg.ablation.rfe)
    enhance_ = EnhanceBlock(params_, "enhance", cfg.model.bev_channels, rng);
  if (cfg.ablation.contrastive)
    logit_scale_ = LogitScale(params_, "align", cfg.model.logit_scale_init);
  if (cfg.model.radar_queries > 0)
    radar_query_proj_ = nn::Linear(params_, "radar_query_proj",
                                   cfg.model.bev_channels, d, rng);
  if (cfg.model.initial_queries > 0) {
    init_query_emb_ = params_.add(
        "init_queries.emb",
        nn::normal_init({cfg.model.initial_queries, d}, 0.5, rng));
    Tensor ref_raw({cfg.model.initial_queries, 3});
    for (auto& v : ref_raw.data) {
      double u = rng.uniform(0.05, 0.95);
      v = std::log(u) - std::log1p(-u);  // inverse sigmoid
    }
    init_query_ref_raw_ = params_.add("init_queries.ref", std::move(ref_raw));
  }
}

ForwardOutput Model::forward(const SampleInput& sample, bool train,
                             Rng* sampler_rng,
                             const TemporalQueries* temporal) {
  const auto& ab = cfg_.ablation;
  ForwardOutput out;

  // image branch
  MultiViewFeatures views = imagenc_.encode(sample.rasters, sample.rig);
  for (const auto& v : views.views) check_finite(v, "imagenc");

  // radar branch
  FeatureGrid f_r;
  f_r.spec = cfg_.grid;
  MergedCloud merged;
  if (ab.radar_route || ab.radar_head) {
    merged = compensate_and_merge(sample.radar_history, sample.dt, cfg_.grid);
    f_r = pillar_.encode(merged, cfg_.grid);
    check_finite(f_r.values, "radarprep");
  }

  ad::Var l_rh1, l_rh2, l_align, l_kd;
  HeatmapTargets hm_targets;
  RadarHeadOutput rh1;
  if (ab.radar_head) {
    rh1 = radar_head_.forward(f_r);
    check_finite(rh1.heatmap, "radar_head");
    hm_targets =
        heatmap_targets(sample.gts, cfg_.grid, cfg_.scene.num_classes);
    l_rh1 = radar_head_loss(rh1, hm_targets);
  }

  // queries
  std::vector<QueryGroup> groups;
  if (cfg_.model.radar_queries > 0) {
    RadarQuerySelection sel = select_radar_queries(
        rh1.heatmap->value, rh1.offsets->value, merged, cfg_.grid,
        cfg_.model.radar_queries,
        sampling_method_from_string(ab.sampling_method), sampler_rng);
    if (!sel.cells.empty()) {
      QueryGroup g;
      g.source = QuerySource::kRadar;
      g.embeddings = radar_query_proj_.forward(
          ad::gather_grid_cells(f_r.values, sel.cells));
      g.ref_points = ad::constant(sel.ref_points);
      groups.push_back(g);
    }
  }
  if (cfg_.model.initial_queries > 0) {
    QueryGroup g;
    g.source = QuerySource::kInitial;
    g.embeddings = init_query_emb_;
    g.ref_points = ad::sigmoid(init_query_ref_raw_);
    groups.push_back(g);
  }
  if (temporal && temporal->count() > 0) {
    QueryGroup g;
    g.source = QuerySource::kTemporal;
    g.embeddings = temporal->embeddings;
    g.ref_points = temporal->ref_points;
    groups.push_back(g);
  }
  QuerySet queries = assemble_queries(groups);
  out.ref_points = queries.ref_points;

  // alignment layers with deep supervision
  ad::Var z = queries.embeddings;
  ad::Var l_task;
  DraLayerOutput last;
  int n_layers = static_cast<int>(layers_.size());
  for (int l = 0; l < n_layers; ++l) {
    last = layers_[static_cast<size_t>(l)].forward(z, queries, f_r, views);
    check_finite(last.fused, "dra");
    z = last.fused;
    DetHeadVars head = det_head_.forward(z, queries.ref_points);
    Tensor cost = build_match_cost(head, sample.gts, cfg_.grid, cfg_.match);
    std::vector<int> assign = hungarian_match(cost);
    ad::Var lt = task_loss(head, sample.gts, assign, cfg_.grid, cfg_.task);
    l_task = l_task ? ad::add(l_task, lt) : lt;
    if (l == n_layers - 1) out.head = head;
  }
  l_task = ad::mul_scalar(l_task, 1.0 / n_layers);
  out.fused = z;
  out.detections = decode_detections(out.head, cfg_.grid);

  // alignment loss on the final layer's pair
  if (ab.contrastive) {
    ad::Var a = last.z_ir ? last.z_ri : last.z_inter;
    ad::Var b = last.z_ir ? last.z_ir : last.z_ri;
    RCA_CHECK(a && b, "forward: alignment loss needs two route outputs");
    if (ab.alignment_loss == "contrastive")
      l_align = contrastive_align(a, b, logit_scale_.tau());
    else if (ab.alignment_loss == "cosine")
      l_align = cosine_align(a, b);
    else
      l_align = l1_align(a, b);
  }

  // radar feature enhancement
  if (ab.rfe) {
    std::vector<Vec3> centers;
    centers.reserve(out.detections.items.size());
    for (const auto& d : out.detections.items) centers.push_back(d.center);
    Tensor occ = occupancy_project(centers, cfg_.grid);
    FeatureGrid f_er = enhance_.forward(f_r, occ, train);
    check_finite(f_er.values, "enhance");
    if (ab.second_radar_head) {
      RadarHeadOutput rh2 = radar_head_.forward(f_er);
      l_rh2 = radar_head_loss(rh2, hm_targets);
    }
    if (ab.kd) l_kd = kd_loss(f_er, f_r);
  }

  out.total = total_loss(l_task, l_rh1, l_rh2, l_align, l_kd, cfg_.loss);
  out.loss_total = out.total->value[0];
  out.loss_task = l_task->value[0];
  out.loss_rh1 = l_rh1 ? l_rh1->value[0] : 0.0;
  out.loss_rh2 = l_rh2 ? l_rh2->value[0] : 0.0;
  out.loss_align = l_align ? l_align->value[0] : 0.0;
  out.loss_kd = l_kd ? l_kd->value[0] : 0.0;
  return out;
}

TemporalQueries Model::make_temporal(const ForwardOutput& prev,
                                     const Se2& prev_ego,
                                     const Se2& cur_ego) const {
  std::vector<double> scores;
  std::vector<Vec3> centers;
  for (const auto& d : prev.detections.items) {
    scores.push_back(d.score);
    centers.push_back(d.center);
  }
  return propagate_temporal_queries(ad::detach(prev.fused), scores, centers,
                                    cfg_.model.temporal_queries, prev_ego,
                                    cur_ego, cfg_.grid);
}

}  // namespace rcalign
