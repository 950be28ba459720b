#pragma once

#include <array>
#include <optional>
#include <vector>

#include "rcalign/tensor.hpp"

namespace rcalign {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

// world -> camera: X_cam = R * X_world + t
struct CameraView {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  std::array<double, 9> rotation{};   // row-major
  std::array<double, 3> translation{};

  Vec3 world_to_camera(const Vec3& p) const;
  Vec3 camera_to_world(const Vec3& p) const;
};

struct CameraRig {
  std::vector<CameraView> views;
  int image_width = 0;
  int image_height = 0;

  // fx,fy > 0 and R orthonormal within 1e-9
  void validate() const;
};

struct PixelProjection {
  int view = 0;
  double u = 0.0, v = 0.0, depth = 0.0;
};

// pinhole u = fx*X/Z + cx, v = fy*Y/Z + cy; only projections with
// depth > 0 and the pixel inside [0,w)x[0,h) are returned
std::vector<PixelProjection> project_point(const Vec3& p, const CameraRig& rig);
// same over a point set, tagged with the input index
std::vector<std::pair<int, PixelProjection>> project_to_views(
    const std::vector<Vec3>& points, const CameraRig& rig);

// inverse of project_point for a known view and depth
Vec3 unproject(const CameraRig& rig, int view, double u, double v,
               double depth);

// 6 outward-facing cameras at uniform yaw spacing, nuScenes-like
CameraRig make_ring_rig(int num_views, int width, int height,
                        double hfov_deg, double cam_height);

// planar pose, used for ego motion
struct Se2 {
  double x = 0.0, y = 0.0, yaw = 0.0;
};

// express a point given in frame `from` in frame `to` (both world-anchored)
Vec3 se2_transfer(const Vec3& p, const Se2& from, const Se2& to);

}  // namespace rcalign
