#include "rcalign/image_encoder.hpp"

#include <cmath>

namespace rcalign {

ViewRasters render_view_rasters(const Frame& frame, const CameraRig& rig,
                                const SceneConfig& cfg, uint64_t seed) {
  int w = rig.image_width, h = rig.image_height;
  int n_views = static_cast<int>(rig.views.size());
  ViewRasters out;
  out.views.assign(static_cast<size_t>(n_views), Tensor({2, h, w}));

  for (const auto& obj : frame.objects) {
    for (const auto& pp : project_point(obj.center, rig)) {
      Tensor& img = out.views[static_cast<size_t>(pp.view)];
      // pixel i is centered at continuous coordinate i + 0.5
      int px = static_cast<int>(std::lround(pp.u - 0.5));
      int py = static_cast<int>(std::lround(pp.v - 0.5));
      int r = static_cast<int>(std::ceil(cfg.blob_radius));
      double intensity =
          static_cast<double>(obj.category + 1) / cfg.num_classes;
      double inv_depth = 1.0 / pp.depth;
      for (int y = py - r; y <= py + r; ++y) {
        if (y < 0 || y >= h) continue;
        for (int x = px - r; x <= px + r; ++x) {
          if (x < 0 || x >= w) continue;
          // nearest object wins the pixel
          if (inv_depth > img.at3(1, y, x)) {
            img.at3(0, y, x) = intensity;
            img.at3(1, y, x) = inv_depth;
          }
        }
      }
    }
  }

  if (cfg.pixel_noise_sigma > 0.0) {
    Rng rng(seed);
    for (auto& img : out.views)
      for (auto& v : img.data) v += rng.normal(0.0, cfg.pixel_noise_sigma);
  }
  return out;
}

ViewEncoder::ViewEncoder(nn::ParamStore& ps, const std::string& name,
                         int out_channels, Rng& rng) {
  conv1_ = nn::Conv2d(ps, name + ".conv1", kInChannels, 16, 3, 2, 1, rng);
  conv2_ = nn::Conv2d(ps, name + ".conv2", 16, 32, 3, 2, 1, rng);
  conv3_ = nn::Conv2d(ps, name + ".conv3", 32, out_channels, 3, 2, 1, rng);
}

MultiViewFeatures ViewEncoder::encode(const ViewRasters& rasters,
                                      const CameraRig& rig) const {
  MultiViewFeatures out;
  out.rig = rig;
  out.stride = kStride;
  for (const auto& img : rasters.views) {
    ad::Var x = ad::constant(img);
    x = ad::relu(conv1_.forward(x));
    x = ad::relu(conv2_.forward(x));
    x = conv3_.forward(x);
    out.views.push_back(x);
  }
  return out;
}

}  // namespace rcalign
