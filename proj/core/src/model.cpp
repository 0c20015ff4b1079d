#include "strel/model.hpp"

#include "strel/error.hpp"
#include "strel/ops.hpp"

namespace strel {

void ModelConfig::validate() const {
  backbone.validate();
  head.validate();
  if (roi_h < 1 || roi_w < 1 || sampling_ratio < 1) {
    throw ConfigError("ModelConfig: roi resolution and sampling ratio must be >= 1");
  }
  if (backbone.out_channels() % attn_heads != 0) {
    throw ConfigError(msg("ModelConfig: feature channels ", backbone.out_channels(),
                          " not divisible by ", attn_heads, " attention heads"));
  }
}

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng backbone_rng = Rng::substream(init_seed, "init.backbone");
  backbone_ = std::make_unique<Backbone>(cfg_.backbone, store_, "backbone", backbone_rng);
  Rng fuse_rng = Rng::substream(init_seed, "init.fuse");
  fusion_ = std::make_unique<GlobalFusion>(cfg_.backbone.out_channels(), store_, "backbone.fuse",
                                           fuse_rng);
  Rng head_rng = Rng::substream(init_seed, "init.head");
  head_ = std::make_unique<RelationHead>(cfg_.head, cfg_.backbone.out_channels(), cfg_.attn_heads,
                                         store_, "head", head_rng);
}

Model::ClipForward Model::forward_clip(const Tensor& frames, const std::vector<Box2D>& boxes,
                                       const std::vector<std::vector<double>>& memory_vectors) const {
  if (boxes.empty()) throw ValueError("forward_clip: no person boxes");
  FeatureMap fmap = backbone_->forward(frames);
  std::vector<PersonFeature> persons;
  persons.reserve(boxes.size());
  ClipForward out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    PersonFeature raw = roi_align_3d(fmap, boxes[i], cfg_.roi_h, cfg_.roi_w, cfg_.sampling_ratio,
                                     static_cast<int>(i));
    out.pooled.push_back(pooled_person_vector(raw));
    persons.push_back(fusion_->fuse(raw, fmap));
  }
  out.logits = head_->forward(persons, memory_vectors);
  return out;
}

std::vector<std::vector<double>> Model::pooled_vectors(const Tensor& frames,
                                                       const std::vector<Box2D>& boxes) const {
  NoGradGuard ng;
  FeatureMap fmap = backbone_->forward(frames);
  std::vector<std::vector<double>> out;
  out.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    PersonFeature raw = roi_align_3d(fmap, boxes[i], cfg_.roi_h, cfg_.roi_w, cfg_.sampling_ratio,
                                     static_cast<int>(i));
    out.push_back(pooled_person_vector(raw));
  }
  return out;
}

void Model::reinit_head(std::uint64_t seed, const std::string& substream) {
  Rng rng = Rng::substream(seed, substream);
  head_->reinit(rng);
}

std::vector<double> pooled_person_vector(const PersonFeature& person) {
  Tensor v = ops::reduce(person.values.detach(), {1, 2, 3}, ops::Reduce::Mean);
  return std::vector<double>(v.data().begin(), v.data().end());
}

}  // namespace strel
