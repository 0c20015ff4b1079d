#pragma once

#include "strel/data.hpp"
#include "strel/rng.hpp"

namespace strel {

// Perturbs each coordinate by uniform(-magnitude, +magnitude) times the box
// side length, clamped back into [0,1] with a minimum side of 1e-3.
Box2D box_jitter(const Box2D& box, double magnitude, Rng& rng);

// Bilinear resize so the shorter side equals min_side unless that would push
// the longer side past max_side, in which case the longer side lands on
// max_side. Normalized boxes are untouched.
ClipSample resize_clip(const ClipSample& clip, int min_side, int max_side);

// Mirrors frames along W and maps each box (x1,x2) -> (1-x2, 1-x1).
ClipSample hflip_clip(const ClipSample& clip);

// Brightness/contrast perturbation confined to the given channel, so the
// label-relevant channels stay untouched. Strength 0.1 means factors drawn
// within +-10%.
ClipSample color_jitter(const ClipSample& clip, int channel, double strength, Rng& rng);

}  // namespace strel
