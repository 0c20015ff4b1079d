#pragma once

#include <functional>
#include <iosfwd>

#include "strel/train.hpp"

namespace strel {

// The three two-stage bank-maintenance strategies:
//   A: stage 1 on the A-like set only, with an online A bank.
//   B: stage 1 jointly on A+K without banks; the head is re-initialized
//      before stage 2.
//   C: stage 1 jointly on A+K with an online A bank and an empty K bank.
// Stage 2 is shared: banks are populated offline with the stage-1 model, the
// backbone (including fusion) is frozen, and the head + classifier finetune
// on the joint data with full banks.
enum class Strategy { None, A, B, C };

struct StageSpec {
  std::vector<char> datasets;  // subset of {'a','k'}
  Strategy strategy = Strategy::None;
  FreezeScope freeze_scope = FreezeScope::None;
  SamplerKind sampler = SamplerKind::Uniform;

  void validate() const;
};

struct StrategyRunConfig {
  TrainConfig stage1;
  TrainConfig stage2;
  int memory_window = 4;
};

struct StrategyResult {
  MemoryBank bank_a;
  MemoryBank bank_k;
  std::vector<MetricsRow> stage1_history;
  std::vector<MetricsRow> stage2_history;
};

std::vector<StreamClip> make_stream(const Dataset& ds, char source, int jitter_channel);

StrategyResult run_strategy(Model& model, Strategy strategy, const Dataset& data_a,
                            const Dataset* data_k, const StrategyRunConfig& cfg,
                            std::ostream* metrics_log = nullptr,
                            const std::function<void(const std::string&)>& stage_hook = {});

// Classifier-only class-balanced finetuning for the long-tailed classes. The
// model must already be trained; everything except head.cls.* is frozen for
// the duration (prior freeze flags are restored afterwards).
std::vector<MetricsRow> decoupled_finetune(Model& model, const std::vector<StreamClip>& stream,
                                           const TrainConfig& cfg,
                                           const BankPolicy& banks = {},
                                           std::ostream* metrics_log = nullptr);

}  // namespace strel
