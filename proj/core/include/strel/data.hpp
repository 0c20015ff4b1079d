#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "strel/rng.hpp"
#include "strel/tensor.hpp"

namespace strel {

// Axis-aligned person box in normalized image coordinates.
struct Box2D {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  void validate() const;
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
};

enum class Split { Train, Val };

// One annotated video clip. `frames` is C x T x H x W with values in [0,1];
// boxes and multi-hot labels are defined at the key frame. Non-annotated
// neighbor clips (context for the memory bank) carry annotated=false and are
// never part of a training stream or evaluation ground truth.
struct ClipSample {
  std::string video_id;
  int timestamp = 0;
  Tensor frames;
  std::vector<Box2D> boxes;
  std::vector<std::vector<int>> labels;  // per person, K entries of 0/1
  Split split = Split::Train;
  bool annotated = true;
  std::vector<int> signatures;  // generator ground truth, kept for diagnostics

  std::size_t num_persons() const { return boxes.size(); }
};

struct Dataset {
  std::vector<ClipSample> clips;
  int num_classes = 0;
  // The channel carrying pure noise, i.e. the one color jitter may touch
  // without disturbing label semantics.
  int noise_channel = 2;

  std::vector<const ClipSample*> select(Split split, bool annotated_only = true) const;
};

// Synthetic relational-action data. Each person carries a discrete signature
// rendered as a constant intensity patch; labels are exact functions of the
// signatures so every relational claim is checkable:
//   class 0 "has-twin": another signature equal to mine exists (in the same
//           clip, or in the tau+-1 neighbor clips when label_window=1)
//   class 1 "is-max":   my signature strictly exceeds every other in the clip
//   class 2 "bright":   my signature is in the upper half of the range
struct SyntheticSpec {
  int num_videos = 20;
  int clips_per_video = 5;
  int persons_min = 2;
  int persons_max = 4;
  int t = 4;
  int h = 32;
  int w = 32;
  int c = 3;
  int q = 8;  // signature buckets
  std::uint64_t seed = 0;
  double persist_prob = 0.9;     // P(signature kept from the previous timestamp)
  double upper_half_prob = 0.5;  // P(signature in the upper half); lowers make "bright" rare
  int label_window = 0;          // 0: has-twin within the clip; 1: across tau+-1 clips
  int signature_channel = 0;     // channel carrying the signature (noise takes the other)
  double noise_amplitude = 1.0;  // scale of the uniform noise channel
  bool annotate_single = false;  // one annotated clip per video (Kinetics-like)
  double val_fraction = 0.2;     // fraction of videos held out as validation
  std::string id_prefix = "v";

  static constexpr int kNumClasses = 3;

  void validate() const;
};

Dataset gen_synthetic(const SyntheticSpec& spec);

// Dataset directory: manifest.txt (one clip record per line) plus one tensor
// file per clip holding the frames.
void save_dataset(const Dataset& ds, const std::string& dir, bool force = false);
Dataset load_dataset(const std::string& dir);

struct DatasetSummary {
  std::size_t clips = 0;
  std::size_t persons = 0;
  std::vector<std::size_t> label_counts;
};
DatasetSummary summarize(const Dataset& ds);

}  // namespace strel
