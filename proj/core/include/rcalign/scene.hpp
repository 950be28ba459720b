#pragma once

#include <vector>

#include "rcalign/geometry.hpp"
#include "rcalign/tensor.hpp"

namespace rcalign {

struct WorldObject {
  int category = 0;
  Vec3 center;
  double length = 1.0, width = 1.0, height = 1.0;  // strictly positive
  double yaw = 0.0;
  double vx = 0.0, vy = 0.0;
};

struct RadarReturn {
  double x = 0.0, y = 0.0, z = 0.0;
  double vx_comp = 0.0, vy_comp = 0.0;  // ego-motion-compensated, ground frame
  double timestamp = 0.0;
};

struct Frame {
  double timestamp = 0.0;
  Se2 ego;  // frame data is expressed in this pose's coordinates
  std::vector<WorldObject> objects;
  std::vector<RadarReturn> radar;
};

struct RadarNoiseConfig {
  double pos_sigma = 0.1;
  double vel_sigma = 0.1;
  double drop_prob = 0.1;      // [0,1]
  double clutter_rate = 2.0;   // expected clutter points per frame
};

struct SceneConfig {
  int num_classes = 4;
  int min_objects = 2;
  int max_objects = 8;
  double extent = 51.2;        // world in [-extent, extent]^2
  double z_min = -1.0;
  double z_max = 1.0;
  int frame_count = 5;
  double frame_dt = 0.5;
  double speed_max = 8.0;
  bool ego_motion = false;     // ego drives +x at ego_speed when set
  double ego_speed = 5.0;
  RadarNoiseConfig radar;
  // camera/raster parameters (consumed by the view renderer)
  int num_views = 6;
  int image_width = 64;
  int image_height = 48;
  double hfov_deg = 70.0;
  double cam_height = 1.6;
  double blob_radius = 2.5;
  double pixel_noise_sigma = 0.02;

  void validate() const;
};

struct SceneSequence {
  std::vector<Frame> frames;  // timestamps strictly increasing
  CameraRig rig;
  uint64_t seed = 0;
};

// Deterministic in (seed, config). Objects are born inside the extent at
// frame 0 and move with constant velocity; radar fires every frame.
SceneSequence generate_sequence(uint64_t seed, const SceneConfig& config);

// One radar sweep over a set of objects: each surviving object yields a
// return at its center plus position noise, carrying its velocity plus
// velocity noise; clutter points are near-static uniform draws.
std::vector<RadarReturn> simulate_radar_frame(
    const std::vector<WorldObject>& objects, const RadarNoiseConfig& noise,
    double extent, double z_min, double z_max, double timestamp, Rng& rng);

}  // namespace rcalign
