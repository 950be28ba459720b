#include "rcalign/bev_render.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "rcalign/dataset.hpp"

namespace rcalign {

std::pair<double, double> bev_to_pixel(double x, double y,
                                       const GridSpec& spec, int image_size) {
  double px = (x - spec.xmin) / (spec.xmax - spec.xmin) * image_size;
  double py = (spec.ymax - y) / (spec.ymax - spec.ymin) * image_size;
  return {px, py};
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

void box_polygon(std::ostringstream& os, double cx, double cy, double l,
                 double w, double yaw, const GridSpec& spec, int size,
                 const char* color, double opacity) {
  double c = std::cos(yaw), s = std::sin(yaw);
  double hx[4] = {l / 2, l / 2, -l / 2, -l / 2};
  double hy[4] = {w / 2, -w / 2, -w / 2, w / 2};
  os << "<polygon points=\"";
  for (int i = 0; i < 4; ++i) {
    double x = cx + c * hx[i] - s * hy[i];
    double y = cy + s * hx[i] + c * hy[i];
    auto [px, py] = bev_to_pixel(x, y, spec, size);
    if (i) os << " ";
    os << fmt(px) << "," << fmt(py);
  }
  os << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\""
     << " stroke-opacity=\"" << fmt(opacity) << "\"/>\n";
}

}  // namespace

std::string render_bev_svg(const std::vector<WorldObject>& gts,
                           const DetectionSet& preds,
                           const std::vector<MergedPoint>& radar,
                           const GridSpec& spec, int image_size,
                           double pred_score_min) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << image_size
     << "\" height=\"" << image_size << "\" viewBox=\"0 0 " << image_size
     << " " << image_size << "\">\n";
  os << "<rect width=\"" << image_size << "\" height=\"" << image_size
     << "\" fill=\"white\"/>\n";
  os << "<rect x=\"0.5\" y=\"0.5\" width=\"" << image_size - 1 << "\" height=\""
     << image_size - 1 << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (const auto& p : radar) {
    auto [px, py] = bev_to_pixel(p.x, p.y, spec, image_size);
    os << "<circle cx=\"" << fmt(px) << "\" cy=\"" << fmt(py)
       << "\" r=\"1.5\" fill=\"gray\"/>\n";
  }
  for (const auto& g : gts)
    box_polygon(os, g.center.x, g.center.y, g.length, g.width, g.yaw, spec,
                image_size, "red", 1.0);
  for (const auto& d : preds.items) {
    if (d.score < pred_score_min) continue;
    box_polygon(os, d.center.x, d.center.y, d.length, d.width, d.yaw, spec,
                image_size, "blue", 0.25 + 0.75 * d.score);
  }
  os << "</svg>\n";
  return os.str();
}

void render_bev(const std::vector<WorldObject>& gts, const DetectionSet& preds,
                const std::vector<MergedPoint>& radar, const GridSpec& spec,
                const std::string& out_path, int image_size,
                double pred_score_min) {
  write_file_atomic(out_path, render_bev_svg(gts, preds, radar, spec,
                                             image_size, pred_score_min));
}

}  // namespace rcalign
