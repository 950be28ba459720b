#include "rcalign/radar_prep.hpp"

#include <cmath>

namespace rcalign {

int GridSpec::height() const {
  double h = (ymax - ymin) / resolution;
  return static_cast<int>(std::lround(h));
}

int GridSpec::width() const {
  double w = (xmax - xmin) / resolution;
  return static_cast<int>(std::lround(w));
}

void GridSpec::validate() const {
  if (resolution <= 0.0)
    throw std::invalid_argument("grid: resolution must be > 0");
  if (xmax <= xmin || ymax <= ymin)
    throw std::invalid_argument("grid: empty extent");
  double h = (ymax - ymin) / resolution;
  double w = (xmax - xmin) / resolution;
  if (std::abs(h - std::lround(h)) > 1e-9 ||
      std::abs(w - std::lround(w)) > 1e-9)
    throw std::invalid_argument("grid: extent not an integer cell count");
}

int GridSpec::cell_x(double x) const {
  return static_cast<int>(std::floor((x - xmin) / resolution));
}

int GridSpec::cell_y(double y) const {
  return static_cast<int>(std::floor((y - ymin) / resolution));
}

int GridSpec::flat_cell(double x, double y) const {
  if (!contains(x, y)) return -1;
  int ix = cell_x(x), iy = cell_y(y);
  if (ix < 0 || ix >= width() || iy < 0 || iy >= height()) return -1;
  return iy * width() + ix;
}

MergedCloud compensate_and_merge(
    const std::vector<std::vector<RadarReturn>>& history, double dt,
    const GridSpec& spec) {
  if (history.empty())
    throw std::invalid_argument("compensate_and_merge: no radar frames");
  if (dt <= 0.0)
    throw std::invalid_argument("compensate_and_merge: dt must be > 0");
  MergedCloud out;
  int n = static_cast<int>(history.size());
  for (int f = 0; f < n; ++f) {
    int age = n - 1 - f;  // newest frame has age 0
    for (const auto& r : history[static_cast<size_t>(f)]) {
      MergedPoint p;
      // one compensation step per frame of age, all with the measured
      // velocity: p_t = p_{t-k} + k*dt*v
      p.x = r.x + age * dt * r.vx_comp;
      p.y = r.y + age * dt * r.vy_comp;
      p.z = r.z;
      p.vx = r.vx_comp;
      p.vy = r.vy_comp;
      p.rel_t = -age * dt;
      if (!spec.contains(p.x, p.y)) continue;
      if (p.z < spec.z_min || p.z > spec.z_max) continue;
      out.points.push_back(p);
    }
  }
  return out;
}

PillarEncoder::PillarEncoder(nn::ParamStore& ps, const std::string& name,
                             int out_channels, Rng& rng) {
  proj_ = nn::Linear(ps, name + ".proj", kPointDims, out_channels, rng);
}

ad::Var PillarEncoder::encode_points(const MergedCloud& cloud,
                                     const GridSpec& spec) const {
  int p_cnt = static_cast<int>(cloud.points.size());
  Tensor feats({p_cnt, kPointDims});
  for (int i = 0; i < p_cnt; ++i) {
    const auto& p = cloud.points[static_cast<size_t>(i)];
    int ix = spec.cell_x(p.x), iy = spec.cell_y(p.y);
    double dx = p.x - spec.cell_center_x(ix);
    double dy = p.y - spec.cell_center_y(iy);
    double* row = &feats.data[static_cast<size_t>(i) * kPointDims];
    row[0] = p.x / spec.xmax;
    row[1] = p.y / spec.ymax;
    row[2] = p.z;
    row[3] = p.vx;
    row[4] = p.vy;
    row[5] = p.rel_t;
    row[6] = dx;
    row[7] = dy;
  }
  return ad::relu(proj_.forward(ad::constant(std::move(feats))));
}

FeatureGrid PillarEncoder::encode(const MergedCloud& cloud,
                                  const GridSpec& spec) const {
  spec.validate();
  int h = spec.height(), w = spec.width();
  if (cloud.points.empty()) {
    return FeatureGrid{ad::constant(Tensor::zeros({out_channels(), h, w})),
                       spec};
  }
  std::vector<int> cells(cloud.points.size());
  for (size_t i = 0; i < cloud.points.size(); ++i)
    cells[i] = spec.flat_cell(cloud.points[i].x, cloud.points[i].y);
  ad::Var feats = encode_points(cloud, spec);
  return FeatureGrid{ad::scatter_max2d(feats, cells, h, w), spec};
}

}  // namespace rcalign
