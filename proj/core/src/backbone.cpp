#include "strel/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "strel/error.hpp"
#include "strel/ops.hpp"

namespace strel {

int BackboneConfig::total_spatial_stride() const {
  int s = 1;
  for (int v : spatial_strides) s *= v;
  return s;
}

int BackboneConfig::total_temporal_stride() const {
  int s = 1;
  for (int v : temporal_strides) s *= v;
  return s;
}

void BackboneConfig::validate() const {
  if (channels.empty()) throw ConfigError("BackboneConfig: need at least one block");
  if (spatial_strides.size() != channels.size() || temporal_strides.size() != channels.size()) {
    throw ConfigError("BackboneConfig: stride lists must match channel list length");
  }
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] < 1 || spatial_strides[i] < 1 || temporal_strides[i] < 1) {
      throw ConfigError("BackboneConfig: channels and strides must be positive");
    }
  }
}

namespace {

constexpr double kBnEps = 1e-5;

// Frozen-statistics normalization folded into one per-channel affine pass.
// Running stats and the affine pair are constants here; only x carries grad.
Tensor channel_affine(const Tensor& x, const std::vector<double>& scale,
                      const std::vector<double>& shift) {
  const std::size_t c = x.shape()[0];
  const std::size_t inner = x.numel() / c;
  std::vector<double> out(x.numel());
  for (std::size_t ci = 0; ci < c; ++ci) {
    const double* src = x.data().data() + ci * inner;
    double* dst = out.data() + ci * inner;
    for (std::size_t i = 0; i < inner; ++i) dst[i] = src[i] * scale[ci] + shift[ci];
  }
  return make_from_op(x.shape(), std::move(out), {x},
                      [x, scale, inner](const std::vector<double>& og, BackwardPass& pass) {
                        if (!x.requires_grad()) return;
                        auto& gx = pass.buf(x);
                        for (std::size_t ci = 0; ci < scale.size(); ++ci) {
                          const double s = scale[ci];
                          const double* src = og.data() + ci * inner;
                          double* dst = gx.data() + ci * inner;
                          for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * s;
                        }
                      });
}

}  // namespace

Backbone::Backbone(const BackboneConfig& cfg, ParamStore& store, const std::string& prefix,
                   Rng& init_rng)
    : cfg_(cfg) {
  cfg_.validate();
  int cin = cfg_.in_channels;
  for (std::size_t b = 0; b < cfg_.channels.size(); ++b) {
    const int cout = cfg_.channels[b];
    const std::string bp = msg(prefix, ".block", b);
    const std::size_t fan_in = static_cast<std::size_t>(cin) * 27;
    Block block;
    block.weight = &store.add(bp + ".conv.weight",
                              init_fan_in({static_cast<std::size_t>(cout),
                                           static_cast<std::size_t>(cin), 3, 3, 3},
                                          fan_in, init_rng));
    block.bias = &store.add(bp + ".conv.bias", Tensor::zeros({static_cast<std::size_t>(cout)}));
    block.bn_mean = &store.add_buffer(bp + ".bn.mean", Tensor::zeros({static_cast<std::size_t>(cout)}));
    block.bn_var = &store.add_buffer(bp + ".bn.var", Tensor::full({static_cast<std::size_t>(cout)}, 1.0));
    block.bn_gain = &store.add_buffer(bp + ".bn.gain", Tensor::full({static_cast<std::size_t>(cout)}, 1.0));
    block.bn_bias = &store.add_buffer(bp + ".bn.bias", Tensor::zeros({static_cast<std::size_t>(cout)}));
    block.stride_t = cfg_.temporal_strides[b];
    block.stride_s = cfg_.spatial_strides[b];
    blocks_.push_back(block);
    cin = cout;
  }
}

FeatureMap Backbone::forward(const Tensor& frames) const {
  if (frames.ndim() != 4 || frames.shape()[0] != static_cast<std::size_t>(cfg_.in_channels)) {
    throw ShapeError(msg("backbone: expected ", cfg_.in_channels, "xTxHxW frames, got ",
                         shape_str(frames.shape())));
  }
  // Stride-2 blocks halve exactly; reject extents the stride does not divide.
  {
    std::size_t t = frames.shape()[1], h = frames.shape()[2], w = frames.shape()[3];
    for (const Block& b : blocks_) {
      if (t % b.stride_t || h % b.stride_s || w % b.stride_s) {
        throw ShapeError(msg("backbone: extents ", shape_str(frames.shape()),
                             " not divisible by configured strides"));
      }
      t /= b.stride_t;
      h /= b.stride_s;
      w /= b.stride_s;
    }
  }

  Tensor x = frames;
  for (const Block& b : blocks_) {
    x = ops::conv3d(x, b.weight->tensor, b.bias->tensor, b.stride_t, b.stride_s, 1, 1);
    const std::size_t c = x.shape()[0];
    std::vector<double> scale(c), shift(c);
    for (std::size_t ci = 0; ci < c; ++ci) {
      const double inv = 1.0 / std::sqrt(b.bn_var->data()[ci] + kBnEps);
      scale[ci] = b.bn_gain->data()[ci] * inv;
      shift[ci] = b.bn_bias->data()[ci] - b.bn_mean->data()[ci] * scale[ci];
    }
    x = channel_affine(x, scale, shift);
    x = ops::gelu(x);
  }
  return FeatureMap{x, cfg_.total_spatial_stride(), cfg_.total_temporal_stride()};
}

std::vector<Box2D> inflate_box(const Box2D& box, int t_extent) {
  if (t_extent < 1) throw ValueError("inflate_box: temporal extent must be >= 1");
  return std::vector<Box2D>(static_cast<std::size_t>(t_extent), box);
}

namespace {

struct BilinearTap {
  std::size_t idx[4];
  double w[4];
};

// Bilinear taps at a continuous feature coordinate (half-pixel centers,
// borders replicated).
BilinearTap make_tap(double y, double x, std::size_t h, std::size_t w) {
  const double u = y - 0.5, v = x - 0.5;
  const double fu = std::floor(u), fv = std::floor(v);
  const double fy = u - fu, fx = v - fv;
  auto cl = [](long i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1));
  };
  const long y0 = static_cast<long>(fu), x0 = static_cast<long>(fv);
  BilinearTap tap;
  tap.idx[0] = cl(y0, h) * w + cl(x0, w);
  tap.idx[1] = cl(y0, h) * w + cl(x0 + 1, w);
  tap.idx[2] = cl(y0 + 1, h) * w + cl(x0, w);
  tap.idx[3] = cl(y0 + 1, h) * w + cl(x0 + 1, w);
  tap.w[0] = (1 - fy) * (1 - fx);
  tap.w[1] = (1 - fy) * fx;
  tap.w[2] = fy * (1 - fx);
  tap.w[3] = fy * fx;
  return tap;
}

}  // namespace

PersonFeature roi_align_3d(const FeatureMap& fmap, const Box2D& box, int out_h, int out_w,
                           int sampling_ratio, int person_index) {
  if (out_h < 1 || out_w < 1 || sampling_ratio < 1) {
    throw ValueError("roi_align_3d: output resolution and sampling ratio must be >= 1");
  }
  box.validate();
  const Tensor& f = fmap.values;
  if (f.ndim() != 4) throw ShapeError("roi_align_3d: feature map must be CxTxHxW");
  const std::size_t c = f.shape()[0], t = f.shape()[1], h = f.shape()[2], w = f.shape()[3];

  // Normalized box mapped straight onto the feature grid (the feature map
  // covers the full frame, so stride cancels out of normalized coordinates).
  const double fx1 = box.x1 * static_cast<double>(w);
  const double fx2 = box.x2 * static_cast<double>(w);
  const double fy1 = box.y1 * static_cast<double>(h);
  const double fy2 = box.y2 * static_cast<double>(h);
  const double bin_w = (fx2 - fx1) / out_w;
  const double bin_h = (fy2 - fy1) / out_h;
  const int sr = sampling_ratio;

  // Taps are identical for every channel and frame; precompute per bin.
  std::vector<BilinearTap> taps;
  taps.reserve(static_cast<std::size_t>(out_h) * out_w * sr * sr);
  for (int by = 0; by < out_h; ++by) {
    for (int bx = 0; bx < out_w; ++bx) {
      for (int py = 0; py < sr; ++py) {
        for (int px = 0; px < sr; ++px) {
          const double sy = fy1 + (by + (py + 0.5) / sr) * bin_h;
          const double sx = fx1 + (bx + (px + 0.5) / sr) * bin_w;
          taps.push_back(make_tap(sy, sx, h, w));
        }
      }
    }
  }

  const std::size_t bins = static_cast<std::size_t>(out_h) * out_w;
  const std::size_t samples = static_cast<std::size_t>(sr) * sr;
  const double inv_samples = 1.0 / static_cast<double>(samples);
  std::vector<double> out(c * t * bins, 0.0);
  const std::size_t plane = h * w;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ti = 0; ti < t; ++ti) {
      const double* src = f.data().data() + (ci * t + ti) * plane;
      double* dst = out.data() + (ci * t + ti) * bins;
      for (std::size_t bin = 0; bin < bins; ++bin) {
        double acc = 0.0;
        for (std::size_t s = 0; s < samples; ++s) {
          const BilinearTap& tap = taps[bin * samples + s];
          acc += tap.w[0] * src[tap.idx[0]] + tap.w[1] * src[tap.idx[1]] +
                 tap.w[2] * src[tap.idx[2]] + tap.w[3] * src[tap.idx[3]];
        }
        dst[bin] = acc * inv_samples;
      }
    }
  }

  Tensor values = make_from_op(
      {c, t, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w)}, std::move(out),
      {f},
      [f, taps, c, t, plane, bins, samples, inv_samples](const std::vector<double>& og,
                                                         BackwardPass& pass) {
        if (!f.requires_grad()) return;
        auto& gf = pass.buf(f);
        for (std::size_t ci = 0; ci < c; ++ci) {
          for (std::size_t ti = 0; ti < t; ++ti) {
            double* dst = gf.data() + (ci * t + ti) * plane;
            const double* g = og.data() + (ci * t + ti) * bins;
            for (std::size_t bin = 0; bin < bins; ++bin) {
              const double gv = g[bin] * inv_samples;
              if (gv == 0.0) continue;
              for (std::size_t s = 0; s < samples; ++s) {
                const BilinearTap& tap = taps[bin * samples + s];
                dst[tap.idx[0]] += gv * tap.w[0];
                dst[tap.idx[1]] += gv * tap.w[1];
                dst[tap.idx[2]] += gv * tap.w[2];
                dst[tap.idx[3]] += gv * tap.w[3];
              }
            }
          }
        }
      });
  return PersonFeature{values, person_index};
}

GlobalFusion::GlobalFusion(int channels, ParamStore& store, const std::string& prefix,
                           Rng& init_rng)
    : channels_(channels) {
  const std::size_t c = static_cast<std::size_t>(channels);
  // Start near the identity on the person half so early training matches the
  // unfused pipeline.
  Tensor w = init_normal({2 * c, c}, 0.02, init_rng);
  for (std::size_t i = 0; i < c; ++i) w.data()[i * c + i] += 1.0;
  weight_ = &store.add(prefix + ".weight", std::move(w));
  bias_ = &store.add(prefix + ".bias", Tensor::zeros({c}));
}

PersonFeature GlobalFusion::fuse(const PersonFeature& person, const FeatureMap& fmap) const {
  const Shape& ps = person.values.shape();
  const Shape& fsh = fmap.values.shape();
  if (ps.size() != 4 || fsh.size() != 4) throw ShapeError("fuse: expected 4-d volumes");
  if (ps[0] != fsh[0]) {
    throw ShapeError(msg("fuse: channel mismatch ", shape_str(ps), " vs ", shape_str(fsh)));
  }
  if (ps[1] != fsh[1]) {
    throw ShapeError(msg("fuse: temporal mismatch ", shape_str(ps), " vs ", shape_str(fsh)));
  }
  const std::size_t c = ps[0], t = ps[1], rh = ps[2], rw = ps[3];

  Tensor context = ops::reduce(fmap.values, {2, 3}, ops::Reduce::Mean);  // [C x T]
  context = ops::reshape(context, {c, t, 1, 1});
  context = ops::expand(context, 2, rh);
  context = ops::expand(context, 3, rw);
  Tensor stacked = ops::concat({person.values, context}, 0);  // [2C x T x h x w]

  // Pointwise conv as a matmul in channels-last orientation.
  Tensor cols = ops::reshape(stacked, {2 * c, t * rh * rw});
  cols = ops::transpose2d(cols);                       // [M x 2C]
  Tensor mixed = ops::matmul(cols, weight_->tensor);   // [M x C]
  mixed = ops::add_bias(mixed, bias_->tensor);
  mixed = ops::transpose2d(mixed);
  return PersonFeature{ops::reshape(mixed, {c, t, rh, rw}), person.person_index};
}

}  // namespace strel
