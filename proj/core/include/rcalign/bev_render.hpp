#pragma once

#include <string>

#include "rcalign/detect.hpp"

namespace rcalign {

// metric -> pixel transform of the BEV panel (y up in metric space maps
// to pixel rows growing downward)
std::pair<double, double> bev_to_pixel(double x, double y,
                                       const GridSpec& spec, int image_size);

// Deterministic SVG: extent frame, radar points as dots, ground truth
// boxes red, predictions blue. Identical inputs give identical bytes.
std::string render_bev_svg(const std::vector<WorldObject>& gts,
                           const DetectionSet& preds,
                           const std::vector<MergedPoint>& radar,
                           const GridSpec& spec, int image_size = 640,
                           double pred_score_min = 0.3);

void render_bev(const std::vector<WorldObject>& gts, const DetectionSet& preds,
                const std::vector<MergedPoint>& radar, const GridSpec& spec,
                const std::string& out_path, int image_size = 640,
                double pred_score_min = 0.3);

}  // namespace rcalign
