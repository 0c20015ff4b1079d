#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "strel/checkpoint.hpp"
#include "strel/data.hpp"
#include "strel/memory_bank.hpp"
#include "strel/model.hpp"
#include "strel/rng.hpp"

namespace strel {

struct TrainConfig {
  double base_lr = 1e-2;
  int batch_size = 4;
  double weight_decay = 1e-7;
  long total_iters = 1000;
  long warmup_iters = 100;
  std::vector<long> milestones;
  double lr_gamma = 0.66;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  double box_jitter_magnitude = 0.05;
  double color_jitter_strength = 0.1;
  long checkpoint_every = 0;  // 0 disables periodic checkpoints

  void validate() const;
};

// Linear warmup to base_lr, then a step drop by lr_gamma at each milestone
// (a milestone applies from that iteration on).
double lr_at(const TrainConfig& cfg, long iter);

// Mean over all elements of the per-entry sigmoid cross entropy, computed in
// the overflow-safe form. Gradient at a logit z is (sigmoid(z) - y) / N.
Tensor bce_multilabel_loss(const Tensor& logits, const Tensor& labels);

Tensor labels_tensor(const std::vector<std::vector<int>>& labels);

// SGD with momentum and decoupled-from-schedule weight decay folded into the
// gradient: v <- m*v + g + wd*p; p <- p - lr*v. Frozen parameters are not
// touched at all.
class Sgd {
 public:
  void step(ParamStore& params, double lr, double momentum, double weight_decay);
  std::map<std::string, std::vector<double>>& velocities() { return velocity_; }
  const std::map<std::string, std::vector<double>>& velocities() const { return velocity_; }

 private:
  std::map<std::string, std::vector<double>> velocity_;
};

enum class FreezeScope { None, Backbone, AllButClassifier };

// Prefix-based freezing; idempotent. "Backbone" covers the fusion conv,
// "AllButClassifier" leaves only the final classifier trainable.
void freeze(ParamStore& params, FreezeScope scope);

enum class SamplerKind { Uniform, ClassBalanced };

// Draw = pick a class uniformly, then a clip uniformly among clips positive
// for it (a clip is positive when any of its persons is).
class ClassBalancedSampler {
 public:
  ClassBalancedSampler(const std::vector<const ClipSample*>& clips, int num_classes);
  std::size_t draw(Rng& rng) const;

 private:
  std::vector<std::vector<std::size_t>> positives_;
};

struct MetricsRow {
  long iter = 0;
  double lr = 0.0;
  double loss = 0.0;
};

// A training-stream element: the clip plus which bank it belongs to and which
// channel is safe to color-jitter.
struct StreamClip {
  const ClipSample* clip = nullptr;
  char source = 'a';
  int jitter_channel = 2;
};

struct BankPolicy {
  MemoryBank* bank_a = nullptr;
  MemoryBank* bank_k = nullptr;
  bool read = false;
  bool write_a = false;
  bool write_k = false;
  int window = 4;
};

// Mutable loop state; round-trips through TrainState so runs resume
// bit-exactly.
struct TrainLoopState {
  Sgd opt;
  long iter = 0;
  Rng sampler_rng{0};
  Rng augment_rng{0};
  std::vector<MetricsRow> history;

  static TrainLoopState fresh(const TrainConfig& cfg, const std::string& stage_name);
  TrainState to_train_state() const;
  void restore(const TrainState& state);
};

// Runs iterations [state.iter, stop_iter) of the loop: sample batch, augment,
// forward (with bank reads), loss, backward, SGD step, bank writes.
// stop_iter = -1 runs to cfg.total_iters. checkpoint_hook fires after any
// iteration i with (i+1) % checkpoint_every == 0.
void train_stage(Model& model, const std::vector<StreamClip>& stream, const TrainConfig& cfg,
                 SamplerKind sampler, const BankPolicy& banks, TrainLoopState& state,
                 std::ostream* metrics_log = nullptr, long stop_iter = -1,
                 const std::function<void(long)>& checkpoint_hook = {});

}  // namespace strel
