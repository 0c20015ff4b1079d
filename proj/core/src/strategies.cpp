#include "strel/strategies.hpp"

#include <ostream>

#include "strel/error.hpp"
#include "strel/logging.hpp"

namespace strel {

void StageSpec::validate() const {
  for (char d : datasets) {
    if (d != 'a' && d != 'k') throw ConfigError(msg("StageSpec: unknown dataset tag '", d, "'"));
  }
  if (sampler == SamplerKind::ClassBalanced && freeze_scope != FreezeScope::AllButClassifier) {
    throw ConfigError("StageSpec: class-balanced sampling is reserved for the decoupled stage");
  }
}

std::vector<StreamClip> make_stream(const Dataset& ds, char source, int jitter_channel) {
  std::vector<StreamClip> out;
  for (const ClipSample* clip : ds.select(Split::Train, /*annotated_only=*/true)) {
    out.push_back(StreamClip{clip, source, jitter_channel});
  }
  return out;
}

namespace {

std::vector<const ClipSample*> all_clips(const Dataset& ds) {
  std::vector<const ClipSample*> out;
  out.reserve(ds.clips.size());
  for (const ClipSample& c : ds.clips) out.push_back(&c);
  return out;
}

}  // namespace

StrategyResult run_strategy(Model& model, Strategy strategy, const Dataset& data_a,
                            const Dataset* data_k, const StrategyRunConfig& cfg,
                            std::ostream* metrics_log,
                            const std::function<void(const std::string&)>& stage_hook) {
  if (strategy == Strategy::None) throw ConfigError("run_strategy: strategy must be A, B or C");
  if ((strategy == Strategy::B || strategy == Strategy::C) && !data_k) {
    throw ConfigError("run_strategy: strategies B and C train jointly and need a K-like dataset");
  }
  const bool use_memory = model.config().head.use_memory;

  StrategyResult result;
  std::vector<StreamClip> stream_a = make_stream(data_a, 'a', data_a.noise_channel);
  std::vector<StreamClip> stream_k =
      data_k ? make_stream(*data_k, 'k', data_k->noise_channel) : std::vector<StreamClip>{};
  std::vector<StreamClip> joint = stream_a;
  joint.insert(joint.end(), stream_k.begin(), stream_k.end());

  // Stage 1.
  freeze(model.params(), FreezeScope::None);
  BankPolicy policy1;
  policy1.window = cfg.memory_window;
  policy1.bank_a = &result.bank_a;
  policy1.bank_k = &result.bank_k;
  const std::vector<StreamClip>* stage1_stream = &joint;
  switch (strategy) {
    case Strategy::A:
      stage1_stream = &stream_a;
      policy1.read = use_memory;
      policy1.write_a = use_memory;
      break;
    case Strategy::B:
      policy1.read = false;
      break;
    case Strategy::C:
      // Online A bank; the K bank stays empty through stage 1.
      policy1.read = use_memory;
      policy1.write_a = use_memory;
      policy1.write_k = false;
      break;
    default:
      break;
  }
  log::info(msg("strategy stage 1: ", stage1_stream->size(), " clips, ", cfg.stage1.total_iters,
                " iters"));
  TrainLoopState state1 = TrainLoopState::fresh(cfg.stage1, "stage1");
  train_stage(model, *stage1_stream, cfg.stage1, SamplerKind::Uniform, policy1, state1,
              metrics_log);
  result.stage1_history = std::move(state1.history);
  if (stage_hook) stage_hook("stage1");

  // Offline bank population with the stage-1 model. Under the stage-2 frozen
  // backbone these vectors are exactly what continued online maintenance
  // would produce, and it also gives strategy B its stage-2 A bank.
  if (use_memory) {
    result.bank_a.clear();
    extract_and_store_all(result.bank_a, model, all_clips(data_a));
    if (data_k) {
      result.bank_k.clear();
      extract_and_store_all(result.bank_k, model, all_clips(*data_k));
    }
  }

  // Stage 2: frozen backbone, head + classifier finetune on the joint data.
  if (strategy == Strategy::B) {
    model.reinit_head(cfg.stage2.seed, "head_reinit_stage2");
  }
  freeze(model.params(), FreezeScope::Backbone);
  BankPolicy policy2;
  policy2.window = cfg.memory_window;
  policy2.bank_a = &result.bank_a;
  policy2.bank_k = &result.bank_k;
  policy2.read = use_memory;
  log::info(msg("strategy stage 2: ", joint.size(), " clips, ", cfg.stage2.total_iters, " iters"));
  TrainLoopState state2 = TrainLoopState::fresh(cfg.stage2, "stage2");
  train_stage(model, joint, cfg.stage2, SamplerKind::Uniform, policy2, state2, metrics_log);
  result.stage2_history = std::move(state2.history);
  if (stage_hook) stage_hook("stage2");

  return result;
}

std::vector<MetricsRow> decoupled_finetune(Model& model, const std::vector<StreamClip>& stream,
                                           const TrainConfig& cfg, const BankPolicy& banks,
                                           std::ostream* metrics_log) {
  // Remember freeze flags so the caller's scope survives the finetune.
  std::vector<std::pair<std::string, bool>> saved;
  for (const auto& [name, p] : model.params().params()) saved.emplace_back(name, p.frozen);

  freeze(model.params(), FreezeScope::AllButClassifier);
  TrainLoopState state = TrainLoopState::fresh(cfg, "decoupled");
  train_stage(model, stream, cfg, SamplerKind::ClassBalanced, banks, state, metrics_log);

  for (const auto& [name, frozen] : saved) model.params().at(name).frozen = frozen;
  return std::move(state.history);
}

}  // namespace strel
