#pragma once

#include <memory>
#include <string>
#include <vector>

#include "strel/backbone.hpp"
#include "strel/data.hpp"
#include "strel/heads.hpp"
#include "strel/params.hpp"

namespace strel {

struct ModelConfig {
  BackboneConfig backbone;
  int roi_h = 7;
  int roi_w = 7;
  int sampling_ratio = 2;
  int attn_heads = 4;
  HeadConfig head;

  void validate() const;
};

// Full clip-to-logits pipeline: backbone -> per-person RoI-Align -> global
// fusion -> relation head. Parameter names are prefixed backbone. / fuse. /
// head. so freezing scopes and checkpoint diffs work by prefix.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t init_seed);

  struct ClipForward {
    Tensor logits;                             // [n x K]
    std::vector<std::vector<double>> pooled;   // detached pre-fusion person vectors
  };

  ClipForward forward_clip(const Tensor& frames, const std::vector<Box2D>& boxes,
                           const std::vector<std::vector<double>>& memory_vectors) const;

  // Pre-fusion pooled person vectors only (memory bank extraction); runs
  // without graph construction.
  std::vector<std::vector<double>> pooled_vectors(const Tensor& frames,
                                                  const std::vector<Box2D>& boxes) const;

  // Fresh draw for every head.* parameter.
  void reinit_head(std::uint64_t seed, const std::string& substream);

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  int feature_channels() const { return cfg_.backbone.out_channels(); }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<GlobalFusion> fusion_;
  std::unique_ptr<RelationHead> head_;
};

// Global mean over (T', h, w): the vector form a person contributes to the
// memory bank.
std::vector<double> pooled_person_vector(const PersonFeature& person);

}  // namespace strel
