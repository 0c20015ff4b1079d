#pragma once

#include <vector>

#include "strel/data.hpp"
#include "strel/params.hpp"
#include "strel/tensor.hpp"

namespace strel {

// Video feature volume C' x T' x H' x W' plus the strides that map it back to
// input pixels.
struct FeatureMap {
  Tensor values;
  int spatial_stride = 1;
  int temporal_stride = 1;
};

// The per-person feature volume extracted by RoI-Align (C' x T' x h x w).
struct PersonFeature {
  Tensor values;
  int person_index = 0;
};

struct BackboneConfig {
  int in_channels = 3;
  std::vector<int> channels = {16, 32, 64};
  std::vector<int> spatial_strides = {2, 2, 2};
  std::vector<int> temporal_strides = {1, 1, 1};

  int out_channels() const { return channels.empty() ? in_channels : channels.back(); }
  int total_spatial_stride() const;
  int total_temporal_stride() const;
  void validate() const;
};

// Stack of 3x3x3 conv blocks, each followed by frozen-statistics
// normalization and a pointwise nonlinearity. The normalization uses fixed
// per-channel running statistics held as buffers; nothing in training updates
// them, matching frozen-batchnorm semantics.
class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, ParamStore& store, const std::string& prefix, Rng& init_rng);

  FeatureMap forward(const Tensor& frames) const;
  const BackboneConfig& config() const { return cfg_; }

 private:
  struct Block {
    Parameter* weight;
    Parameter* bias;
    Tensor* bn_mean;
    Tensor* bn_var;
    Tensor* bn_gain;
    Tensor* bn_bias;
    int stride_t;
    int stride_s;
  };
  BackboneConfig cfg_;
  std::vector<Block> blocks_;
};

// Replicates the key-frame box at every temporal index.
std::vector<Box2D> inflate_box(const Box2D& box, int t_extent);

// Per-frame 2D RoI-Align over a video feature map: the normalized box is
// mapped into feature coordinates (half-pixel centers, no rounding), split
// into out_h x out_w bins, and each bin averages sampling_ratio^2 bilinear
// samples. Differentiable w.r.t. the feature map.
PersonFeature roi_align_3d(const FeatureMap& fmap, const Box2D& box, int out_h, int out_w,
                           int sampling_ratio, int person_index = 0);

// Global-context fusion: the feature map is average-pooled over space,
// broadcast across the RoI grid, channel-concatenated with the person volume
// and mapped back to C' channels by a learned pointwise convolution.
class GlobalFusion {
 public:
  GlobalFusion(int channels, ParamStore& store, const std::string& prefix, Rng& init_rng);

  PersonFeature fuse(const PersonFeature& person, const FeatureMap& fmap) const;
  int channels() const { return channels_; }

 private:
  int channels_;
  Parameter* weight_;  // [C' x 2C']
  Parameter* bias_;    // [C']
};

}  // namespace strel
