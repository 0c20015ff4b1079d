#include "strel/augment.hpp"

#include <algorithm>
#include <cmath>

#include "strel/error.hpp"

namespace strel {

namespace {
constexpr double kMinSide = 1e-3;

// Clamps an interval into [0,1] preserving a minimum width.
void clamp_interval(double& lo, double& hi) {
  lo = std::clamp(lo, 0.0, 1.0);
  hi = std::clamp(hi, 0.0, 1.0);
  if (hi - lo < kMinSide) {
    double mid = std::clamp(0.5 * (lo + hi), kMinSide / 2, 1.0 - kMinSide / 2);
    lo = mid - kMinSide / 2;
    hi = mid + kMinSide / 2;
  }
}
}  // namespace

Box2D box_jitter(const Box2D& box, double magnitude, Rng& rng) {
  if (magnitude < 0.0 || magnitude >= 0.5) {
    throw ValueError(msg("box_jitter: magnitude ", magnitude, " outside [0, 0.5)"));
  }
  const double w = box.width(), h = box.height();
  Box2D out;
  out.x1 = box.x1 + rng.uniform(-magnitude, magnitude) * w;
  out.x2 = box.x2 + rng.uniform(-magnitude, magnitude) * w;
  out.y1 = box.y1 + rng.uniform(-magnitude, magnitude) * h;
  out.y2 = box.y2 + rng.uniform(-magnitude, magnitude) * h;
  clamp_interval(out.x1, out.x2);
  clamp_interval(out.y1, out.y2);
  return out;
}

namespace {

// Bilinear sample with half-pixel centers and border replication.
double sample_bilinear(const double* plane, int h, int w, double y, double x) {
  const double u = y - 0.5, v = x - 0.5;
  const int y0 = static_cast<int>(std::floor(u));
  const int x0 = static_cast<int>(std::floor(v));
  const double fy = u - y0, fx = v - x0;
  auto at = [&](int yy, int xx) {
    yy = std::clamp(yy, 0, h - 1);
    xx = std::clamp(xx, 0, w - 1);
    return plane[static_cast<std::size_t>(yy) * w + xx];
  };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
         fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

}  // namespace

ClipSample resize_clip(const ClipSample& clip, int min_side, int max_side) {
  if (min_side < 1 || max_side < min_side) {
    throw ValueError(msg("resize_clip: bad sides min=", min_side, " max=", max_side));
  }
  const Shape& s = clip.frames.shape();
  if (s.size() != 4) throw ShapeError("resize_clip: frames must be CxTxHxW");
  const int c = static_cast<int>(s[0]), t = static_cast<int>(s[1]), h = static_cast<int>(s[2]),
            w = static_cast<int>(s[3]);
  const int short_side = std::min(h, w), long_side = std::max(h, w);
  double scale = static_cast<double>(min_side) / short_side;
  if (long_side * scale > max_side) scale = static_cast<double>(max_side) / long_side;
  const int nh = std::max(1, static_cast<int>(std::lround(h * scale)));
  const int nw = std::max(1, static_cast<int>(std::lround(w * scale)));

  ClipSample out = clip;
  out.frames = Tensor::zeros({static_cast<std::size_t>(c), static_cast<std::size_t>(t),
                              static_cast<std::size_t>(nh), static_cast<std::size_t>(nw)});
  const double sy = static_cast<double>(h) / nh;
  const double sx = static_cast<double>(w) / nw;
  auto src = clip.frames.data();
  auto dst = out.frames.data();
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(nh) * nw;
  for (int ci = 0; ci < c; ++ci) {
    for (int ti = 0; ti < t; ++ti) {
      const double* sp = src.data() + (static_cast<std::size_t>(ci) * t + ti) * in_plane;
      double* dp = dst.data() + (static_cast<std::size_t>(ci) * t + ti) * out_plane;
      for (int y = 0; y < nh; ++y) {
        for (int x = 0; x < nw; ++x) {
          dp[static_cast<std::size_t>(y) * nw + x] =
              sample_bilinear(sp, h, w, (y + 0.5) * sy, (x + 0.5) * sx);
        }
      }
    }
  }
  return out;
}

ClipSample hflip_clip(const ClipSample& clip) {
  const Shape& s = clip.frames.shape();
  if (s.size() != 4) throw ShapeError("hflip_clip: frames must be CxTxHxW");
  const std::size_t c = s[0], t = s[1], h = s[2], w = s[3];
  ClipSample out = clip;
  out.frames = Tensor::zeros(s);
  auto src = clip.frames.data();
  auto dst = out.frames.data();
  for (std::size_t i = 0; i < c * t * h; ++i) {
    const double* sp = src.data() + i * w;
    double* dp = dst.data() + i * w;
    for (std::size_t x = 0; x < w; ++x) dp[x] = sp[w - 1 - x];
  }
  for (Box2D& b : out.boxes) {
    const double nx1 = 1.0 - b.x2, nx2 = 1.0 - b.x1;
    b.x1 = nx1;
    b.x2 = nx2;
  }
  return out;
}

ClipSample color_jitter(const ClipSample& clip, int channel, double strength, Rng& rng) {
  const Shape& s = clip.frames.shape();
  if (s.size() != 4 || channel < 0 || channel >= static_cast<int>(s[0])) {
    throw ValueError("color_jitter: bad channel");
  }
  const double contrast = 1.0 + rng.uniform(-strength, strength);
  const double brightness = rng.uniform(-strength, strength);
  ClipSample out = clip;
  out.frames = clip.frames.clone();
  const std::size_t chan = s[1] * s[2] * s[3];
  auto d = out.frames.data();
  double* p = d.data() + static_cast<std::size_t>(channel) * chan;
  for (std::size_t i = 0; i < chan; ++i) {
    p[i] = std::clamp(contrast * (p[i] - 0.5) + 0.5 + brightness, 0.0, 1.0);
  }
  return out;
}

}  // namespace strel
