#include "rcalign/scene.hpp"

#include <cmath>

namespace rcalign {

void SceneConfig::validate() const {
  if (extent <= 0.0) throw std::invalid_argument("scene: extent must be > 0");
  if (frame_dt <= 0.0)
    throw std::invalid_argument("scene: frame_dt must be > 0");
  if (frame_count < 1)
    throw std::invalid_argument("scene: frame_count must be >= 1");
  if (min_objects < 0 || max_objects < min_objects)
    throw std::invalid_argument("scene: bad object count range");
  if (num_classes < 1)
    throw std::invalid_argument("scene: num_classes must be >= 1");
  if (radar.pos_sigma < 0.0 || radar.clutter_rate < 0.0 ||
      radar.drop_prob < 0.0 || radar.drop_prob > 1.0)
    throw std::invalid_argument("scene: bad radar noise config");
  if (z_max < z_min) throw std::invalid_argument("scene: bad z range");
}

std::vector<RadarReturn> simulate_radar_frame(
    const std::vector<WorldObject>& objects, const RadarNoiseConfig& noise,
    double extent, double z_min, double z_max, double timestamp, Rng& rng) {
  std::vector<RadarReturn> out;
  for (const auto& obj : objects) {
    if (noise.drop_prob > 0.0 && rng.uniform() < noise.drop_prob) continue;
    RadarReturn r;
    r.x = obj.center.x + (noise.pos_sigma > 0.0 ? rng.normal(0.0, noise.pos_sigma) : 0.0);
    r.y = obj.center.y + (noise.pos_sigma > 0.0 ? rng.normal(0.0, noise.pos_sigma) : 0.0);
    r.z = obj.center.z + (noise.pos_sigma > 0.0 ? rng.normal(0.0, noise.pos_sigma) : 0.0);
    r.vx_comp = obj.vx + (noise.vel_sigma > 0.0 ? rng.normal(0.0, noise.vel_sigma) : 0.0);
    r.vy_comp = obj.vy + (noise.vel_sigma > 0.0 ? rng.normal(0.0, noise.vel_sigma) : 0.0);
    r.timestamp = timestamp;
    out.push_back(r);
  }
  // Poisson clutter, near-zero velocity
  if (noise.clutter_rate > 0.0) {
    int n_clutter = 0;
    double l = std::exp(-noise.clutter_rate), p = 1.0;
    while (true) {
      p *= rng.uniform();
      if (p <= l) break;
      ++n_clutter;
    }
    for (int i = 0; i < n_clutter; ++i) {
      RadarReturn r;
      r.x = rng.uniform(-extent, extent);
      r.y = rng.uniform(-extent, extent);
      r.z = rng.uniform(z_min, z_max);
      r.vx_comp = rng.normal(0.0, 0.05);
      r.vy_comp = rng.normal(0.0, 0.05);
      r.timestamp = timestamp;
      out.push_back(r);
    }
  }
  return out;
}

SceneSequence generate_sequence(uint64_t seed, const SceneConfig& config) {
  config.validate();
  SceneSequence seq;
  seq.seed = seed;
  seq.rig = make_ring_rig(config.num_views, config.image_width,
                          config.image_height, config.hfov_deg,
                          config.cam_height);

  Rng master(seed);
  Rng obj_rng = master.fork(1);

  int n_obj = config.min_objects == config.max_objects
                  ? config.min_objects
                  : obj_rng.uniform_int(config.min_objects, config.max_objects);
  std::vector<WorldObject> objects;
  // keep births away from the rim so most stay in range over the sequence
  double birth_extent = config.extent * 0.85;
  for (int i = 0; i < n_obj; ++i) {
    WorldObject o;
    o.category = obj_rng.uniform_int(0, config.num_classes - 1);
    o.center.x = obj_rng.uniform(-birth_extent, birth_extent);
    o.center.y = obj_rng.uniform(-birth_extent, birth_extent);
    o.center.z = obj_rng.uniform(config.z_min, config.z_max);
    o.length = obj_rng.uniform(1.5, 5.5);
    o.width = obj_rng.uniform(0.8, 2.5);
    o.height = obj_rng.uniform(1.0, 2.5);
    o.yaw = obj_rng.uniform(-M_PI, M_PI);
    double speed = obj_rng.uniform(0.0, config.speed_max);
    double heading = obj_rng.uniform(-M_PI, M_PI);
    o.vx = speed * std::cos(heading);
    o.vy = speed * std::sin(heading);
    objects.push_back(o);
  }

  for (int f = 0; f < config.frame_count; ++f) {
    Frame frame;
    frame.timestamp = f * config.frame_dt;
    if (config.ego_motion)
      frame.ego = Se2{config.ego_speed * frame.timestamp, 0.0, 0.0};

    std::vector<WorldObject> world_objs = objects;
    for (auto& o : world_objs) {
      o.center.x += o.vx * frame.timestamp;
      o.center.y += o.vy * frame.timestamp;
    }
    // frame data is stored in the frame's ego coordinates (yaw is always 0
    // here, so velocities need no rotation)
    frame.objects = world_objs;
    for (auto& o : frame.objects) {
      o.center.x -= frame.ego.x;
      o.center.y -= frame.ego.y;
    }

    Rng radar_rng = master.fork(100 + static_cast<uint64_t>(f));
    frame.radar = simulate_radar_frame(frame.objects, config.radar,
                                       config.extent, config.z_min,
                                       config.z_max, frame.timestamp,
                                       radar_rng);
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

}  // namespace rcalign
