#include "rcalign/geometry.hpp"

#include <cmath>

namespace rcalign {

Vec3 CameraView::world_to_camera(const Vec3& p) const {
  const auto& r = rotation;
  return {r[0] * p.x + r[1] * p.y + r[2] * p.z + translation[0],
          r[3] * p.x + r[4] * p.y + r[5] * p.z + translation[1],
          r[6] * p.x + r[7] * p.y + r[8] * p.z + translation[2]};
}

Vec3 CameraView::camera_to_world(const Vec3& p) const {
  double qx = p.x - translation[0];
  double qy = p.y - translation[1];
  double qz = p.z - translation[2];
  const auto& r = rotation;  // R^T q
  return {r[0] * qx + r[3] * qy + r[6] * qz,
          r[1] * qx + r[4] * qy + r[7] * qz,
          r[2] * qx + r[5] * qy + r[8] * qz};
}

void CameraRig::validate() const {
  RCA_CHECK(image_width > 0 && image_height > 0, "rig: empty image plane");
  for (const auto& v : views) {
    RCA_CHECK(v.fx > 0.0 && v.fy > 0.0, "rig: focal lengths must be positive");
    // R^T R = I within 1e-9
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 3; ++k)
          acc += v.rotation[static_cast<size_t>(3 * k + i)] *
                 v.rotation[static_cast<size_t>(3 * k + j)];
        double want = i == j ? 1.0 : 0.0;
        RCA_CHECK(std::abs(acc - want) < 1e-9, "rig: rotation not orthonormal");
      }
  }
}

std::vector<PixelProjection> project_point(const Vec3& p,
                                           const CameraRig& rig) {
  std::vector<PixelProjection> out;
  for (size_t vi = 0; vi < rig.views.size(); ++vi) {
    const auto& view = rig.views[vi];
    Vec3 c = view.world_to_camera(p);
    if (c.z <= 0.0) continue;
    double u = view.fx * c.x / c.z + view.cx;
    double v = view.fy * c.y / c.z + view.cy;
    if (u < 0.0 || u >= rig.image_width || v < 0.0 || v >= rig.image_height)
      continue;
    out.push_back({static_cast<int>(vi), u, v, c.z});
  }
  return out;
}

std::vector<std::pair<int, PixelProjection>> project_to_views(
    const std::vector<Vec3>& points, const CameraRig& rig) {
  std::vector<std::pair<int, PixelProjection>> out;
  for (size_t i = 0; i < points.size(); ++i)
    for (const auto& pp : project_point(points[i], rig))
      out.emplace_back(static_cast<int>(i), pp);
  return out;
}

Vec3 unproject(const CameraRig& rig, int view, double u, double v,
               double depth) {
  const auto& cam = rig.views[static_cast<size_t>(view)];
  Vec3 c{(u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth, depth};
  return cam.camera_to_world(c);
}

CameraRig make_ring_rig(int num_views, int width, int height, double hfov_deg,
                        double cam_height) {
  CameraRig rig;
  rig.image_width = width;
  rig.image_height = height;
  double hfov = hfov_deg * M_PI / 180.0;
  double fx = width / (2.0 * std::tan(hfov / 2.0));
  for (int i = 0; i < num_views; ++i) {
    CameraView v;
    v.fx = fx;
    v.fy = fx;
    v.cx = width / 2.0;
    v.cy = height / 2.0;
    double yaw = 2.0 * M_PI * i / num_views;
    // camera looks along world direction (cos yaw, sin yaw, 0); camera
    // frame: +z forward, +x right, +y down
    double cz[3] = {std::cos(yaw), std::sin(yaw), 0.0};
    double cyv[3] = {0.0, 0.0, -1.0};
    // x = y cross z keeps the frame right-handed (image u grows rightward)
    double cxv[3] = {std::sin(yaw), -std::cos(yaw), 0.0};
    // rows of R are the camera axes in world coordinates
    v.rotation = {cxv[0], cxv[1], cxv[2], cyv[0], cyv[1],
                  cyv[2], cz[0],  cz[1],  cz[2]};
    // camera at origin raised by cam_height: t = -R * C
    double c0 = 0.0, c1 = 0.0, c2 = cam_height;
    v.translation = {
        -(v.rotation[0] * c0 + v.rotation[1] * c1 + v.rotation[2] * c2),
        -(v.rotation[3] * c0 + v.rotation[4] * c1 + v.rotation[5] * c2),
        -(v.rotation[6] * c0 + v.rotation[7] * c1 + v.rotation[8] * c2)};
    rig.views.push_back(v);
  }
  return rig;
}

Vec3 se2_transfer(const Vec3& p, const Se2& from, const Se2& to) {
  // to world
  double c = std::cos(from.yaw), s = std::sin(from.yaw);
  double wx = from.x + c * p.x - s * p.y;
  double wy = from.y + s * p.x + c * p.y;
  // into target frame
  double dx = wx - to.x, dy = wy - to.y;
  double ct = std::cos(to.yaw), st = std::sin(to.yaw);
  return {ct * dx + st * dy, -st * dx + ct * dy, p.z};
}

}  // namespace rcalign
