#include "strel/train.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "strel/augment.hpp"
#include "strel/error.hpp"
#include "strel/logging.hpp"
#include "strel/ops.hpp"

namespace strel {

void TrainConfig::validate() const {
  if (base_lr <= 0.0) throw ConfigError("TrainConfig: base_lr must be positive");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (total_iters < 0) throw ConfigError("TrainConfig: total_iters must be >= 0");
  if (warmup_iters < 1) throw ConfigError("TrainConfig: warmup_iters must be >= 1");
  if (lr_gamma <= 0.0 || lr_gamma > 1.0) throw ConfigError("TrainConfig: lr_gamma must be in (0,1]");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("TrainConfig: momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("TrainConfig: weight_decay must be >= 0");
  long prev = 0;
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] >= total_iters) {
      throw ConfigError("TrainConfig: milestones must be < total_iters");
    }
    if (i > 0 && milestones[i] <= prev) {
      throw ConfigError("TrainConfig: milestones must be strictly increasing");
    }
    prev = milestones[i];
  }
  if (!milestones.empty() && warmup_iters >= milestones.front()) {
    throw ConfigError("TrainConfig: warmup_iters must end before the first milestone");
  }
  if (box_jitter_magnitude < 0.0 || box_jitter_magnitude >= 0.5) {
    throw ConfigError("TrainConfig: box_jitter_magnitude outside [0, 0.5)");
  }
  if (color_jitter_strength < 0.0 || color_jitter_strength > 1.0) {
    throw ConfigError("TrainConfig: color_jitter_strength outside [0,1]");
  }
}

double lr_at(const TrainConfig& cfg, long iter) {
  if (iter < 0 || iter > cfg.total_iters) {
    throw ValueError(msg("lr_at: iteration ", iter, " outside [0, ", cfg.total_iters, "]"));
  }
  if (iter < cfg.warmup_iters) {
    return cfg.base_lr * static_cast<double>(iter + 1) / static_cast<double>(cfg.warmup_iters);
  }
  double lr = cfg.base_lr;
  for (long m : cfg.milestones) {
    if (iter >= m) lr *= cfg.lr_gamma;
  }
  return lr;
}

Tensor bce_multilabel_loss(const Tensor& logits, const Tensor& labels) {
  if (logits.shape() != labels.shape()) {
    throw ShapeError(msg("bce: logits ", shape_str(logits.shape()), " vs labels ",
                         shape_str(labels.shape())));
  }
  if (logits.numel() == 0) throw ValueError("bce: empty input");
  for (double y : labels.data()) {
    if (y != 0.0 && y != 1.0) throw ValueError(msg("bce: label ", y, " is not 0/1"));
  }
  const std::size_t n = logits.numel();
  const double inv_n = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.data()[i];
    const double y = labels.data()[i];
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor labs = labels;  // captured for the gradient
  return make_from_op({}, {acc * inv_n}, {logits},
                      [logits, labs, inv_n](const std::vector<double>& og, BackwardPass& pass) {
                        if (!logits.requires_grad()) return;
                        auto& gl = pass.buf(logits);
                        for (std::size_t i = 0; i < gl.size(); ++i) {
                          const double z = logits.data()[i];
                          const double sig =
                              z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
                          gl[i] += og[0] * inv_n * (sig - labs.data()[i]);
                        }
                      });
}

Tensor labels_tensor(const std::vector<std::vector<int>>& labels) {
  if (labels.empty()) throw ValueError("labels_tensor: no rows");
  const std::size_t k = labels[0].size();
  std::vector<double> flat;
  flat.reserve(labels.size() * k);
  for (const auto& row : labels) {
    if (row.size() != k) throw ShapeError("labels_tensor: ragged label rows");
    for (int v : row) flat.push_back(static_cast<double>(v));
  }
  return Tensor::from_data({labels.size(), k}, std::move(flat));
}

void Sgd::step(ParamStore& params, double lr, double momentum, double weight_decay) {
  for (auto& [name, p] : params.params()) {
    if (p.frozen) continue;
    if (!p.tensor.has_grad()) continue;
    auto g = p.tensor.grad();
    auto w = p.tensor.data();
    auto [vit, fresh] = velocity_.try_emplace(name);
    if (fresh) vit->second.assign(w.size(), 0.0);
    std::vector<double>& v = vit->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
      w[i] -= lr * v[i];
    }
  }
}

void freeze(ParamStore& params, FreezeScope scope) {
  switch (scope) {
    case FreezeScope::None:
      params.set_all_frozen(false);
      break;
    case FreezeScope::Backbone:
      params.set_all_frozen(false);
      params.set_frozen_prefix("backbone.", true);
      break;
    case FreezeScope::AllButClassifier:
      params.set_all_frozen(true);
      params.set_frozen_prefix("head.cls.", false);
      break;
  }
}

ClassBalancedSampler::ClassBalancedSampler(const std::vector<const ClipSample*>& clips,
                                           int num_classes) {
  positives_.resize(static_cast<std::size_t>(num_classes));
  for (std::size_t idx = 0; idx < clips.size(); ++idx) {
    for (const auto& lab : clips[idx]->labels) {
      const int known = std::min<int>(num_classes, static_cast<int>(lab.size()));
      for (int k = 0; k < known; ++k) {
        if (lab[static_cast<std::size_t>(k)]) {
          if (positives_[k].empty() || positives_[k].back() != idx) positives_[k].push_back(idx);
        }
      }
    }
  }
  std::string empty;
  for (int k = 0; k < num_classes; ++k) {
    if (positives_[k].empty()) empty += empty.empty() ? std::to_string(k) : "," + std::to_string(k);
  }
  if (!empty.empty()) {
    throw ConfigError(msg("class_balanced_sampler: classes without positive samples: ", empty));
  }
}

std::size_t ClassBalancedSampler::draw(Rng& rng) const {
  const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(positives_.size()) - 1));
  const auto& pool = positives_[k];
  return pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(pool.size()) - 1))];
}

TrainLoopState TrainLoopState::fresh(const TrainConfig& cfg, const std::string& stage_name) {
  TrainLoopState s;
  s.sampler_rng = Rng::substream(cfg.seed, stage_name + ".sampler");
  s.augment_rng = Rng::substream(cfg.seed, stage_name + ".augment");
  return s;
}

TrainState TrainLoopState::to_train_state() const {
  TrainState ts;
  ts.iter = iter;
  ts.velocities = opt.velocities();
  ts.rng_states["sampler"] = sampler_rng.serialize();
  ts.rng_states["augment"] = augment_rng.serialize();
  return ts;
}

void TrainLoopState::restore(const TrainState& ts) {
  iter = ts.iter;
  opt.velocities() = ts.velocities;
  auto s = ts.rng_states.find("sampler");
  auto a = ts.rng_states.find("augment");
  if (s == ts.rng_states.end() || a == ts.rng_states.end()) {
    throw ParseError("TrainLoopState::restore: checkpoint lacks rng states");
  }
  sampler_rng.deserialize(s->second);
  augment_rng.deserialize(a->second);
}

void train_stage(Model& model, const std::vector<StreamClip>& stream, const TrainConfig& cfg,
                 SamplerKind sampler, const BankPolicy& banks, TrainLoopState& state,
                 std::ostream* metrics_log, long stop_iter,
                 const std::function<void(long)>& checkpoint_hook) {
  cfg.validate();
  if (stream.empty()) throw ValueError("train_stage: empty training stream");
  const long stop = stop_iter < 0 ? cfg.total_iters : std::min(stop_iter, cfg.total_iters);

  std::vector<const ClipSample*> clips;
  clips.reserve(stream.size());
  for (const StreamClip& sc : stream) clips.push_back(sc.clip);
  std::unique_ptr<ClassBalancedSampler> balanced;
  if (sampler == SamplerKind::ClassBalanced) {
    balanced = std::make_unique<ClassBalancedSampler>(clips, model.config().head.num_classes);
  }

  const bool use_memory = model.config().head.use_memory;

  for (long it = state.iter; it < stop; ++it) {
    const double lr = lr_at(cfg, it);

    std::vector<std::size_t> batch(static_cast<std::size_t>(cfg.batch_size));
    for (auto& idx : batch) {
      idx = balanced ? balanced->draw(state.sampler_rng)
                     : static_cast<std::size_t>(
                           state.sampler_rng.uniform_int(0, static_cast<long>(stream.size()) - 1));
    }

    model.params().zero_grads();
    std::vector<Tensor> losses;
    losses.reserve(batch.size());
    struct PendingWrite {
      const StreamClip* sc;
      std::vector<std::vector<double>> pooled;
    };
    std::vector<PendingWrite> writes;

    for (std::size_t idx : batch) {
      const StreamClip& sc = stream[idx];
      const ClipSample& clip = *sc.clip;

      std::vector<Box2D> boxes;
      boxes.reserve(clip.boxes.size());
      for (const Box2D& b : clip.boxes) {
        boxes.push_back(cfg.box_jitter_magnitude > 0.0
                            ? box_jitter(b, cfg.box_jitter_magnitude, state.augment_rng)
                            : b);
      }
      Tensor frames = clip.frames;
      if (cfg.color_jitter_strength > 0.0) {
        ClipSample jittered =
            color_jitter(clip, sc.jitter_channel, cfg.color_jitter_strength, state.augment_rng);
        frames = jittered.frames;
      }

      std::vector<std::vector<double>> memory;
      if (use_memory && banks.read) {
        MemoryBank* bank = sc.source == 'k' ? banks.bank_k : banks.bank_a;
        if (bank) memory = bank->read_window(clip.video_id, clip.timestamp, banks.window);
      }

      Model::ClipForward fwd = model.forward_clip(frames, boxes, memory);
      losses.push_back(bce_multilabel_loss(fwd.logits, labels_tensor(clip.labels)));

      const bool want_write = sc.source == 'k' ? banks.write_k : banks.write_a;
      if (want_write) writes.push_back({&sc, std::move(fwd.pooled)});
    }

    Tensor loss = ops::scale(ops::add_n(losses), 1.0 / static_cast<double>(losses.size()));
    backward(loss);
    state.opt.step(model.params(), lr, cfg.momentum, cfg.weight_decay);

    // Bank updates happen strictly after the batch forward, so a clip never
    // reads its own same-iteration features.
    for (PendingWrite& pw : writes) {
      MemoryBank* bank = pw.sc->source == 'k' ? banks.bank_k : banks.bank_a;
      if (bank) bank->write(pw.sc->clip->video_id, pw.sc->clip->timestamp, std::move(pw.pooled));
    }

    const MetricsRow row{it, lr, loss.item()};
    state.history.push_back(row);
    if (metrics_log) {
      (*metrics_log) << row.iter << ' ' << row.lr << ' ' << row.loss << '\n';
    }
    state.iter = it + 1;
    if (checkpoint_hook && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
      checkpoint_hook(it + 1);
    }
  }
}

}  // namespace strel
