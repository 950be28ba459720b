#pragma once

#include "rcalign/sampling.hpp"
#include "rcalign/scene.hpp"

namespace rcalign {

// Synthetic camera rasters: channel 0 carries category-coded intensity,
// channel 1 inverse depth; nearest object wins overlapping pixels.
struct ViewRasters {
  std::vector<Tensor> views;  // per view [2, h, w]
};

ViewRasters render_view_rasters(const Frame& frame, const CameraRig& rig,
                                const SceneConfig& cfg, uint64_t seed);

// Weight-shared stride-2 conv stack standing in for a pretrained
// backbone+FPN; single output scale.
class ViewEncoder {
 public:
  static constexpr int kInChannels = 2;
  static constexpr int kStride = 8;

  ViewEncoder() = default;
  ViewEncoder(nn::ParamStore& ps, const std::string& name, int out_channels,
              Rng& rng);

  MultiViewFeatures encode(const ViewRasters& rasters,
                           const CameraRig& rig) const;

 private:
  nn::Conv2d conv1_, conv2_, conv3_;
};

}  // namespace rcalign
