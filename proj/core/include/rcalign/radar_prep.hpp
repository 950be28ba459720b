#pragma once

#include <vector>

#include "rcalign/nn.hpp"
#include "rcalign/scene.hpp"

namespace rcalign {

// Metric BEV grid. Cell (iy, ix) covers
// [xmin + ix*res, xmin + (ix+1)*res) x [ymin + iy*res, ymin + (iy+1)*res).
struct GridSpec {
  double xmin = -51.2, xmax = 51.2;
  double ymin = -51.2, ymax = 51.2;
  double resolution = 0.8;
  double z_min = -5.0, z_max = 3.0;  // point cloud z filter + query z range

  int height() const;
  int width() const;
  void validate() const;

  bool contains(double x, double y) const {
    return x >= xmin && x < xmax && y >= ymin && y < ymax;
  }
  int cell_x(double x) const;
  int cell_y(double y) const;
  int flat_cell(double x, double y) const;  // -1 when out of range
  // continuous grid coordinate, integer = cell center
  double to_cell_coord_x(double x) const { return (x - xmin) / resolution - 0.5; }
  double to_cell_coord_y(double y) const { return (y - ymin) / resolution - 0.5; }
  double cell_center_x(int ix) const { return xmin + (ix + 0.5) * resolution; }
  double cell_center_y(int iy) const { return ymin + (iy + 0.5) * resolution; }
};

struct FeatureGrid {
  ad::Var values;  // [C,H,W]
  GridSpec spec;
};

struct MergedPoint {
  double x = 0.0, y = 0.0, z = 0.0;
  double vx = 0.0, vy = 0.0;
  double rel_t = 0.0;  // 0 for the newest frame, -k*dt for k frames back
};

struct MergedCloud {
  std::vector<MergedPoint> points;
};

// Velocity-based motion compensation over a short radar history. Frames
// ordered oldest -> newest; a point k frames old moves by k*dt*(vx, vy).
// Points landing outside the grid extent or the z filter are dropped.
// Fewer than `max_frames` frames is fine; zero frames is an input error.
MergedCloud compensate_and_merge(
    const std::vector<std::vector<RadarReturn>>& history, double dt,
    const GridSpec& spec);

// Simplified pillar encoder: shared per-point affine + ReLU over
// [x, y, z, vx, vy, rel_t, dx_cell, dy_cell], max-pooled per BEV cell.
// Cells without points stay exactly zero.
class PillarEncoder {
 public:
  PillarEncoder() = default;
  PillarEncoder(nn::ParamStore& ps, const std::string& name, int out_channels,
                Rng& rng);

  FeatureGrid encode(const MergedCloud& cloud, const GridSpec& spec) const;
  // per-point features before pooling, exposed for oracle tests
  ad::Var encode_points(const MergedCloud& cloud, const GridSpec& spec) const;

  int out_channels() const { return proj_.out_dim(); }
  static constexpr int kPointDims = 8;

 private:
  nn::Linear proj_;
};

}  // namespace rcalign
