#include "rcalign/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

using nlohmann::json;

namespace rcalign {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument("config: unknown key '" + it.key() +
                                  "' in " + where);
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

json radar_to_json(const RadarNoiseConfig& r) {
  return {{"pos_sigma", r.pos_sigma},
          {"vel_sigma", r.vel_sigma},
          {"drop_prob", r.drop_prob},
          {"clutter_rate", r.clutter_rate}};
}

void radar_from_json(const json& j, RadarNoiseConfig& r) {
  check_keys(j, {"pos_sigma", "vel_sigma", "drop_prob", "clutter_rate"},
             "scene.radar");
  get_to(j, "pos_sigma", r.pos_sigma);
  get_to(j, "vel_sigma", r.vel_sigma);
  get_to(j, "drop_prob", r.drop_prob);
  get_to(j, "clutter_rate", r.clutter_rate);
}

json scene_to_json(const SceneConfig& s) {
  return {{"num_classes", s.num_classes},
          {"min_objects", s.min_objects},
          {"max_objects", s.max_objects},
          {"extent", s.extent},
          {"z_min", s.z_min},
          {"z_max", s.z_max},
          {"frame_count", s.frame_count},
          {"frame_dt", s.frame_dt},
          {"speed_max", s.speed_max},
          {"ego_motion", s.ego_motion},
          {"ego_speed", s.ego_speed},
          {"radar", radar_to_json(s.radar)},
          {"num_views", s.num_views},
          {"image_width", s.image_width},
          {"image_height", s.image_height},
          {"hfov_deg", s.hfov_deg},
          {"cam_height", s.cam_height},
          {"blob_radius", s.blob_radius},
          {"pixel_noise_sigma", s.pixel_noise_sigma}};
}

void scene_from_json(const json& j, SceneConfig& s) {
  check_keys(j,
             {"num_classes", "min_objects", "max_objects", "extent", "z_min",
              "z_max", "frame_count", "frame_dt", "speed_max", "ego_motion",
              "ego_speed", "radar", "num_views", "image_width", "image_height",
              "hfov_deg", "cam_height", "blob_radius", "pixel_noise_sigma"},
             "scene");
  get_to(j, "num_classes", s.num_classes);
  get_to(j, "min_objects", s.min_objects);
  get_to(j, "max_objects", s.max_objects);
  get_to(j, "extent", s.extent);
  get_to(j, "z_min", s.z_min);
  get_to(j, "z_max", s.z_max);
  get_to(j, "frame_count", s.frame_count);
  get_to(j, "frame_dt", s.frame_dt);
  get_to(j, "speed_max", s.speed_max);
  get_to(j, "ego_motion", s.ego_motion);
  get_to(j, "ego_speed", s.ego_speed);
  if (j.contains("radar")) radar_from_json(j.at("radar"), s.radar);
  get_to(j, "num_views", s.num_views);
  get_to(j, "image_width", s.image_width);
  get_to(j, "image_height", s.image_height);
  get_to(j, "hfov_deg", s.hfov_deg);
  get_to(j, "cam_height", s.cam_height);
  get_to(j, "blob_radius", s.blob_radius);
  get_to(j, "pixel_noise_sigma", s.pixel_noise_sigma);
}

json grid_to_json(const GridSpec& g) {
  return {{"xmin", g.xmin},           {"xmax", g.xmax}, {"ymin", g.ymin},
          {"ymax", g.ymax},           {"resolution", g.resolution},
          {"z_min", g.z_min},         {"z_max", g.z_max}};
}

void grid_from_json(const json& j, GridSpec& g) {
  check_keys(j, {"xmin", "xmax", "ymin", "ymax", "resolution", "z_min",
                 "z_max"},
             "grid");
  get_to(j, "xmin", g.xmin);
  get_to(j, "xmax", g.xmax);
  get_to(j, "ymin", g.ymin);
  get_to(j, "ymax", g.ymax);
  get_to(j, "resolution", g.resolution);
  get_to(j, "z_min", g.z_min);
  get_to(j, "z_max", g.z_max);
}

}  // namespace

void ExperimentConfig::validate() const {
  scene.validate();
  grid.validate();
  if (model.query_dim <= 0 || model.heads <= 0 || model.samples <= 0 ||
      model.layers <= 0)
    throw std::invalid_argument("config: model dims must be positive");
  if (model.query_dim % model.heads != 0)
    throw std::invalid_argument("config: query_dim must divide by heads");
  if (model.radar_queries < 0 || model.initial_queries < 0 ||
      model.temporal_queries < 0)
    throw std::invalid_argument("config: query counts must be >= 0");
  if (model.radar_queries + model.initial_queries + model.temporal_queries == 0)
    throw std::invalid_argument("config: at least one query required");
  if (optim.batch_size <= 0 || optim.iterations <= 0)
    throw std::invalid_argument("config: optim counts must be positive");
  if (optim.lr <= 0.0)
    throw std::invalid_argument("config: lr must be positive");
  if (loss.lambda_rh1 < 0 || loss.lambda_rh2 < 0 || loss.lambda_cl < 0 ||
      loss.lambda_kd < 0)
    throw std::invalid_argument("config: loss weights must be >= 0");

  const auto& a = ablation;
  if (a.second_route && !a.radar_route)
    throw std::invalid_argument("config: second_route requires radar_route");
  if (a.contrastive && !a.radar_route)
    throw std::invalid_argument("config: contrastive requires radar_route");
  if (a.rfe && !a.radar_route)
    throw std::invalid_argument("config: rfe requires radar_route");
  if (a.second_radar_head && !a.rfe)
    throw std::invalid_argument("config: second_radar_head requires rfe");
  if (a.kd && !a.rfe)
    throw std::invalid_argument("config: kd requires rfe");
  if (a.rfe && !a.radar_head)
    throw std::invalid_argument("config: rfe requires radar_head");
  if (model.radar_queries > 0 && (!a.radar_head || !a.radar_route))
    throw std::invalid_argument(
        "config: radar queries require radar_head and radar_route");
  if (a.sampling_method != "topk" && a.sampling_method != "random" &&
      a.sampling_method != "fps")
    throw std::invalid_argument("config: sampling_method must be one of "
                                "random|fps|topk");
  if (a.alignment_loss != "contrastive" && a.alignment_loss != "cosine" &&
      a.alignment_loss != "l1")
    throw std::invalid_argument("config: alignment_loss must be one of "
                                "l1|cosine|contrastive");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j = json::parse(json_text);
  check_keys(j,
             {"seed", "scene", "grid", "model", "loss", "task_loss", "match",
              "optim", "ablation"},
             "root");
  ExperimentConfig c;
  get_to(j, "seed", c.seed);
  if (j.contains("scene")) scene_from_json(j.at("scene"), c.scene);
  if (j.contains("grid")) grid_from_json(j.at("grid"), c.grid);
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m,
               {"query_dim", "heads", "samples", "layers", "radar_queries",
                "initial_queries", "temporal_queries", "bev_channels",
                "img_channels", "ffn_hidden", "logit_scale_init"},
               "model");
    get_to(m, "query_dim", c.model.query_dim);
    get_to(m, "heads", c.model.heads);
    get_to(m, "samples", c.model.samples);
    get_to(m, "layers", c.model.layers);
    get_to(m, "radar_queries", c.model.radar_queries);
    get_to(m, "initial_queries", c.model.initial_queries);
    get_to(m, "temporal_queries", c.model.temporal_queries);
    get_to(m, "bev_channels", c.model.bev_channels);
    get_to(m, "img_channels", c.model.img_channels);
    get_to(m, "ffn_hidden", c.model.ffn_hidden);
    get_to(m, "logit_scale_init", c.model.logit_scale_init);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, {"lambda_rh1", "lambda_rh2", "lambda_cl", "lambda_kd"},
               "loss");
    get_to(l, "lambda_rh1", c.loss.lambda_rh1);
    get_to(l, "lambda_rh2", c.loss.lambda_rh2);
    get_to(l, "lambda_cl", c.loss.lambda_cl);
    get_to(l, "lambda_kd", c.loss.lambda_kd);
  }
  if (j.contains("task_loss")) {
    const json& t = j.at("task_loss");
    check_keys(t, {"cls", "center", "size", "yaw", "vel", "focal_alpha"},
               "task_loss");
    get_to(t, "cls", c.task.cls);
    get_to(t, "center", c.task.center);
    get_to(t, "size", c.task.size);
    get_to(t, "yaw", c.task.yaw);
    get_to(t, "vel", c.task.vel);
    get_to(t, "focal_alpha", c.task.focal_alpha);
  }
  if (j.contains("match")) {
    const json& m = j.at("match");
    check_keys(m, {"cls", "center"}, "match");
    get_to(m, "cls", c.match.cls);
    get_to(m, "center", c.match.center);
  }
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    check_keys(o,
               {"lr", "weight_decay", "beta1", "beta2", "cosine_final",
                "grad_clip", "batch_size", "iterations", "checkpoint_every",
                "log_every"},
               "optim");
    get_to(o, "lr", c.optim.lr);
    get_to(o, "weight_decay", c.optim.weight_decay);
    get_to(o, "beta1", c.optim.beta1);
    get_to(o, "beta2", c.optim.beta2);
    get_to(o, "cosine_final", c.optim.cosine_final);
    get_to(o, "grad_clip", c.optim.grad_clip);
    get_to(o, "batch_size", c.optim.batch_size);
    get_to(o, "iterations", c.optim.iterations);
    get_to(o, "checkpoint_every", c.optim.checkpoint_every);
    get_to(o, "log_every", c.optim.log_every);
  }
  if (j.contains("ablation")) {
    const json& a = j.at("ablation");
    check_keys(a,
               {"radar_route", "second_route", "contrastive", "radar_head",
                "rfe", "second_radar_head", "kd", "sampling_method",
                "alignment_loss"},
               "ablation");
    get_to(a, "radar_route", c.ablation.radar_route);
    get_to(a, "second_route", c.ablation.second_route);
    get_to(a, "contrastive", c.ablation.contrastive);
    get_to(a, "radar_head", c.ablation.radar_head);
    get_to(a, "rfe", c.ablation.rfe);
    get_to(a, "second_radar_head", c.ablation.second_radar_head);
    get_to(a, "kd", c.ablation.kd);
    get_to(a, "sampling_method", c.ablation.sampling_method);
    get_to(a, "alignment_loss", c.ablation.alignment_loss);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  RCA_CHECK(is.good(), "cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return parse_config(text);
}

std::string serialize_config(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["scene"] = scene_to_json(c.scene);
  j["grid"] = grid_to_json(c.grid);
  j["model"] = {{"query_dim", c.model.query_dim},
                {"heads", c.model.heads},
                {"samples", c.model.samples},
                {"layers", c.model.layers},
                {"radar_queries", c.model.radar_queries},
                {"initial_queries", c.model.initial_queries},
                {"temporal_queries", c.model.temporal_queries},
                {"bev_channels", c.model.bev_channels},
                {"img_channels", c.model.img_channels},
                {"ffn_hidden", c.model.ffn_hidden},
                {"logit_scale_init", c.model.logit_scale_init}};
  j["loss"] = {{"lambda_rh1", c.loss.lambda_rh1},
               {"lambda_rh2", c.loss.lambda_rh2},
               {"lambda_cl", c.loss.lambda_cl},
               {"lambda_kd", c.loss.lambda_kd}};
  j["task_loss"] = {{"cls", c.task.cls},       {"center", c.task.center},
                    {"size", c.task.size},     {"yaw", c.task.yaw},
                    {"vel", c.task.vel},       {"focal_alpha", c.task.focal_alpha}};
  j["match"] = {{"cls", c.match.cls}, {"center", c.match.center}};
  j["optim"] = {{"lr", c.optim.lr},
                {"weight_decay", c.optim.weight_decay},
                {"beta1", c.optim.beta1},
                {"beta2", c.optim.beta2},
                {"cosine_final", c.optim.cosine_final},
                {"grad_clip", c.optim.grad_clip},
                {"batch_size", c.optim.batch_size},
                {"iterations", c.optim.iterations},
                {"checkpoint_every", c.optim.checkpoint_every},
                {"log_every", c.optim.log_every}};
  j["ablation"] = {{"radar_route", c.ablation.radar_route},
                   {"second_route", c.ablation.second_route},
                   {"contrastive", c.ablation.contrastive},
                   {"radar_head", c.ablation.radar_head},
                   {"rfe", c.ablation.rfe},
                   {"second_radar_head", c.ablation.second_radar_head},
                   {"kd", c.ablation.kd},
                   {"sampling_method", c.ablation.sampling_method},
                   {"alignment_loss", c.ablation.alignment_loss}};
  return j.dump(2) + "\n";
}

SamplingMethod sampling_method_from_string(const std::string& s) {
  if (s == "topk") return SamplingMethod::kTopk;
  if (s == "random") return SamplingMethod::kRandom;
  if (s == "fps") return SamplingMethod::kFps;
  throw std::invalid_argument("unknown sampling method: " + s);
}

}  // namespace rcalign
