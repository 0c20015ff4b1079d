#pragma once

#include <string>
#include <vector>

#include "strel/backbone.hpp"
#include "strel/params.hpp"
#include "strel/tensor.hpp"

namespace strel {

// One attention input sequence. sources[i] is the person index for
// current-clip tokens and -1 for memory tokens.
struct TokenSequence {
  Tensor tokens;  // [L x C']
  std::vector<int> sources;
};

enum class HeadType { Linear, SOnly, TOnly };
enum class Agg { Mean, Max };

struct HeadConfig {
  HeadType type = HeadType::TOnly;
  Agg agg = Agg::Mean;
  int num_classes = 3;
  bool use_memory = false;

  // S-only with a memory bank is rejected: the per-cell token layout has no
  // stable slot for position-agnostic bank vectors.
  void validate() const;
};

// For each spatial cell (y,x): one sequence whose i-th token aggregates
// person i's feature over the temporal axis at that cell.
std::vector<TokenSequence> build_tokens_s_only(const std::vector<PersonFeature>& persons, Agg agg);

// For each temporal index t: one sequence whose i-th token aggregates person
// i's feature over all spatial cells at t.
std::vector<TokenSequence> build_tokens_t_only(const std::vector<PersonFeature>& persons, Agg agg);

// Pre-norm transformer encoder block weights; one shared instance serves
// every spatial or temporal position.
struct EncoderBlockParams {
  Parameter* wq;
  Parameter* wk;
  Parameter* wv;
  Parameter* wo;
  Parameter* ff1;  // [C x 4C]
  Parameter* ff2;  // [4C x C]
  Parameter* ln1_gain;
  Parameter* ln1_bias;
  Parameter* ln2_gain;
  Parameter* ln2_bias;
  int num_heads = 4;
  int dim = 0;
};

// Multi-head self-attention + feed-forward, both pre-norm with residuals.
// No positional encoding: outputs permute with the input tokens.
TokenSequence encoder_block(const TokenSequence& seq, const EncoderBlockParams& params);

// Relation head: token construction, the shared encoder block, position
// averaging and a two-layer classifier. The linear head skips the encoder and
// classifies the globally averaged person feature.
class RelationHead {
 public:
  RelationHead(const HeadConfig& cfg, int channels, int num_heads, ParamStore& store,
               const std::string& prefix, Rng& init_rng);

  // memory_vectors must be empty unless cfg.use_memory.
  Tensor forward(const std::vector<PersonFeature>& persons,
                 const std::vector<std::vector<double>>& memory_vectors) const;

  const HeadConfig& config() const { return cfg_; }
  const EncoderBlockParams& encoder_params() const { return enc_; }

  // Redraws every head parameter in place (two-stage strategies that retrain
  // the head from scratch).
  void reinit(Rng& rng);

 private:
  Tensor classify(const Tensor& person_vec) const;  // [1 x C] -> [1 x K]

  HeadConfig cfg_;
  int channels_;
  EncoderBlockParams enc_;
  Parameter* fc1_;
  Parameter* fc1_bias_;
  Parameter* fc2_;
  Parameter* fc2_bias_;
};

// Elementwise sigmoid: multi-label scores in [0,1].
Tensor predict_scores(const Tensor& logits);

}  // namespace strel
