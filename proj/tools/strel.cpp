// strel: synthetic relational action-detection pipeline driver.
//
// Subcommands: gen-data, train, eval, ensemble, report. Every command is
// deterministic given its config and seed, and writes a resolved copy of its
// effective configuration next to the outputs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "strel/ava_csv.hpp"
#include "strel/checkpoint.hpp"
#include "strel/config.hpp"
#include "strel/data.hpp"
#include "strel/error.hpp"
#include "strel/eval.hpp"
#include "strel/logging.hpp"
#include "strel/memory_bank.hpp"
#include "strel/model.hpp"
#include "strel/strategies.hpp"
#include "strel/train.hpp"

namespace fs = std::filesystem;
using namespace strel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void ensure_out_dir(const std::string& out, bool force, bool must_be_fresh) {
  fs::path p(out);
  if (must_be_fresh && fs::exists(p) && !fs::is_empty(p) && !force) {
    throw IoError(msg("output directory '", out, "' exists and is not empty (use --force)"));
  }
  fs::create_directories(p);
}

void write_resolved_file(const std::string& out_dir, const std::string& name,
                         const std::function<void(std::ostream&)>& writer) {
  std::ofstream os(fs::path(out_dir) / name);
  if (!os) throw IoError(msg("cannot write resolved config in '", out_dir, "'"));
  writer(os);
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const CommonArgs& args) {
  GenDataSetup setup = read_gen_config(IniConfig::parse_file(args.config_path), args.seed);
  ensure_out_dir(args.out_dir, args.force, /*must_be_fresh=*/true);
  Dataset ds = gen_synthetic(setup.spec);
  save_dataset(ds, args.out_dir, /*force=*/true);
  write_resolved_file(args.out_dir, "gen-data.resolved.ini",
                      [&](std::ostream& os) { setup.write_resolved(os); });
  DatasetSummary s = summarize(ds);
  std::cout << "clips " << s.clips << "\npersons " << s.persons << "\n";
  for (std::size_t k = 0; k < s.label_counts.size(); ++k) {
    std::cout << "class" << k << "_positives " << s.label_counts[k] << "\n";
  }
  return kExitOk;
}

// ------------------------------------------------------------------- train

struct BankPaths {
  std::string a, k;
};

BankPaths bank_paths_for(const std::string& ckpt_path) {
  std::string base = ckpt_path;
  const std::string suffix = ".ckpt";
  if (base.size() > suffix.size() && base.substr(base.size() - suffix.size()) == suffix) {
    base = base.substr(0, base.size() - suffix.size());
  }
  return BankPaths{base + ".bank.a", base + ".bank.k"};
}

void save_train_checkpoint(const std::string& path, const Model& model, const TrainLoopState* state,
                           const MemoryBank* bank_a, const MemoryBank* bank_k) {
  if (state) {
    TrainState ts = state->to_train_state();
    save_checkpoint(path, model.params(), &ts);
  } else {
    save_checkpoint(path, model.params(), nullptr);
  }
  const BankPaths banks = bank_paths_for(path);
  if (bank_a && bank_a->num_entries() > 0) bank_a->save(banks.a);
  if (bank_k && bank_k->num_entries() > 0) bank_k->save(banks.k);
}

int cmd_train(const CommonArgs& args, const std::string& resume_path) {
  TrainSetup setup = read_train_config(IniConfig::parse_file(args.config_path), args.seed);
  ensure_out_dir(args.out_dir, args.force, /*must_be_fresh=*/false);
  write_resolved_file(args.out_dir, "train.resolved.ini",
                      [&](std::ostream& os) { setup.write_resolved(os); });

  Dataset data_a = load_dataset(setup.dataset_a);
  std::optional<Dataset> data_k;
  if (!setup.dataset_k.empty()) data_k = load_dataset(setup.dataset_k);

  Model model(setup.model, setup.seed);
  std::ofstream metrics(fs::path(args.out_dir) / "metrics.log");
  if (!metrics) throw IoError("cannot open metrics.log for writing");

  const bool use_memory = setup.model.head.use_memory;
  MemoryBank bank_a, bank_k;

  if (setup.strategy == Strategy::None) {
    std::vector<StreamClip> stream = make_stream(data_a, 'a', data_a.noise_channel);
    if (data_k) {
      auto sk = make_stream(*data_k, 'k', data_k->noise_channel);
      stream.insert(stream.end(), sk.begin(), sk.end());
    }
    BankPolicy policy;
    policy.bank_a = &bank_a;
    policy.bank_k = &bank_k;
    policy.window = setup.memory_window;
    policy.read = use_memory;
    policy.write_a = use_memory;
    policy.write_k = use_memory;

    TrainLoopState state = TrainLoopState::fresh(setup.stage1, "stage1");
    if (!resume_path.empty()) {
      LoadedCheckpoint loaded = load_checkpoint(resume_path, model.params());
      if (!loaded.state) throw ConfigError("--resume checkpoint carries no train state");
      state.restore(*loaded.state);
      const BankPaths banks = bank_paths_for(resume_path);
      if (fs::exists(banks.a)) bank_a = MemoryBank::load(banks.a);
      if (fs::exists(banks.k)) bank_k = MemoryBank::load(banks.k);
      log::info(msg("resumed from '", resume_path, "' at iteration ", state.iter));
    }
    auto hook = [&](long it) {
      save_train_checkpoint(msg(args.out_dir, "/iter", it, ".ckpt"), model, &state, &bank_a,
                            &bank_k);
    };
    train_stage(model, stream, setup.stage1, SamplerKind::Uniform, policy, state, &metrics, -1,
                hook);
    save_train_checkpoint(msg(args.out_dir, "/final.ckpt"), model, &state, &bank_a, &bank_k);
  } else {
    if (!resume_path.empty()) {
      throw ConfigError("--resume supports single-stage runs (strategy = none) only");
    }
    StrategyRunConfig scfg;
    scfg.stage1 = setup.stage1;
    scfg.stage2 = setup.stage2;
    scfg.memory_window = setup.memory_window;
    auto hook = [&](const std::string& stage) {
      save_checkpoint(msg(args.out_dir, "/", stage, ".ckpt"), model.params(), nullptr);
    };
    StrategyResult result = run_strategy(model, setup.strategy, data_a,
                                         data_k ? &*data_k : nullptr, scfg, &metrics, hook);
    bank_a = std::move(result.bank_a);
    bank_k = std::move(result.bank_k);
    save_train_checkpoint(msg(args.out_dir, "/final.ckpt"), model, nullptr, &bank_a, &bank_k);
  }

  if (setup.decoupled) {
    std::vector<StreamClip> stream = make_stream(data_a, 'a', data_a.noise_channel);
    if (data_k) {
      auto sk = make_stream(*data_k, 'k', data_k->noise_channel);
      stream.insert(stream.end(), sk.begin(), sk.end());
    }
    BankPolicy policy;
    policy.bank_a = &bank_a;
    policy.bank_k = &bank_k;
    policy.window = setup.memory_window;
    policy.read = use_memory;
    decoupled_finetune(model, stream, setup.decoupled_cfg, policy, &metrics);
    save_checkpoint(msg(args.out_dir, "/decoupled.ckpt"), model.params(), nullptr);
    save_train_checkpoint(msg(args.out_dir, "/final.ckpt"), model, nullptr, &bank_a, &bank_k);
  }

  std::cout << "checkpoint " << args.out_dir << "/final.ckpt\n";
  return kExitOk;
}

// -------------------------------------------------------------------- eval

int cmd_eval(const CommonArgs& args, const std::vector<int>& scales_override, bool no_flip,
             bool gt_boxes_flag, int workers_override) {
  EvalSetup setup = read_eval_config(IniConfig::parse_file(args.config_path), args.seed);
  if (!scales_override.empty()) setup.tta.scales = scales_override;
  if (no_flip) setup.tta.flip = false;
  if (gt_boxes_flag) setup.gt_boxes = true;
  if (workers_override > 0) setup.workers = workers_override;
  ensure_out_dir(args.out_dir, args.force, /*must_be_fresh=*/false);
  write_resolved_file(args.out_dir, "eval.resolved.ini",
                      [&](std::ostream& os) { setup.write_resolved(os); });

  Dataset ds = load_dataset(setup.dataset);
  Model model(setup.model, setup.seed);
  load_checkpoint(setup.checkpoint, model.params());

  MemoryBank bank;
  if (setup.model.head.use_memory) {
    std::vector<const ClipSample*> all;
    for (const ClipSample& c : ds.clips) all.push_back(&c);
    extract_and_store_all(bank, model, all);
  }

  InferOptions opts;
  opts.tta = setup.tta;
  opts.boxes = setup.gt_boxes ? BoxSource::GroundTruth : BoxSource::Jittered;
  opts.jitter_magnitude = setup.box_jitter;
  opts.jitter_seed = setup.seed;
  opts.workers = setup.workers;
  opts.memory_window = setup.memory_window;

  std::vector<DetectionResult> results =
      infer_dataset(model, ds, setup.split, setup.model.head.use_memory ? &bank : nullptr, opts);
  EvalReport report = frame_map_50(results, gt_from_dataset(ds, setup.split), ds.num_classes);

  emit_results_csv(results, (fs::path(args.out_dir) / "results.csv").string());
  {
    std::ofstream kv(fs::path(args.out_dir) / "report.kv");
    write_report_kv(kv, report);
    std::ofstream table(fs::path(args.out_dir) / "report.txt");
    write_report_table(table, report);
  }
  write_report_table(std::cout, report);
  return kExitOk;
}

// ---------------------------------------------------------------- ensemble

int cmd_ensemble(const CommonArgs& args, const std::vector<std::string>& inputs,
                 const std::string& dataset_dir) {
  if (inputs.empty()) throw ConfigError("ensemble: need at least one results csv");
  ensure_out_dir(args.out_dir, args.force, /*must_be_fresh=*/false);
  std::vector<std::vector<DetectionResult>> sets;
  sets.reserve(inputs.size());
  for (const std::string& path : inputs) {
    sets.push_back(results_from_rows(parse_ava_csv(path)));
  }
  std::vector<DetectionResult> merged = ensemble_average(sets);
  emit_results_csv(merged, (fs::path(args.out_dir) / "ensemble.csv").string());
  write_resolved_file(args.out_dir, "ensemble.resolved.ini", [&](std::ostream& os) {
    os << "[ensemble]\n";
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      os << "input." << i << " = " << inputs[i] << '\n';
    }
    if (!dataset_dir.empty()) os << "dataset = " << dataset_dir << '\n';
  });

  if (!dataset_dir.empty()) {
    Dataset ds = load_dataset(dataset_dir);
    EvalReport report = frame_map_50(merged, gt_from_dataset(ds, Split::Val), ds.num_classes);
    std::ofstream kv(fs::path(args.out_dir) / "report.kv");
    write_report_kv(kv, report);
    std::ofstream table(fs::path(args.out_dir) / "report.txt");
    write_report_table(table, report);
    write_report_table(std::cout, report);
  } else {
    std::cout << "ensemble " << args.out_dir << "/ensemble.csv (" << merged.size() << " boxes)\n";
  }
  return kExitOk;
}

// ------------------------------------------------------------------ report

int cmd_report(const CommonArgs& args, const std::string& before_path,
               const std::string& after_path, int top_n) {
  std::ifstream bf(before_path), af(after_path);
  if (!bf) throw IoError(msg("report: cannot open '", before_path, "'"));
  if (!af) throw IoError(msg("report: cannot open '", after_path, "'"));
  EvalReport before = read_report_kv(bf);
  EvalReport after = read_report_kv(af);
  DeltaReport delta = per_class_delta_report(before, after, after.per_class_counts, top_n);

  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "map_delta = %.6f", after.map - before.map);
  out << buf << '\n';
  std::snprintf(buf, sizeof(buf), "top%d_mean_delta = %.6f", top_n, delta.top_mean);
  out << buf << '\n';
  std::snprintf(buf, sizeof(buf), "bottom%d_mean_delta = %.6f", top_n, delta.bottom_mean);
  out << buf << '\n';
  for (const auto& [cls, d] : delta.movers) {
    std::snprintf(buf, sizeof(buf), "delta.%d = %+.6f", cls, d);
    out << buf << '\n';
  }
  std::cout << out.str();
  ensure_out_dir(args.out_dir, args.force, /*must_be_fresh=*/false);
  {
    std::ofstream os(fs::path(args.out_dir) / "delta.kv");
    os << out.str();
  }
  write_resolved_file(args.out_dir, "report.resolved.ini", [&](std::ostream& os) {
    os << "[report]\nbefore = " << before_path << "\nafter = " << after_path
       << "\ntop_n = " << top_n << '\n';
  });
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relation-modeling action detection pipeline (synthetic, CPU)"};
  app.require_subcommand(1);

  CommonArgs common;
  long seed_arg = -1;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    if (needs_config) {
      cmd->add_option("--config", common.config_path, "configuration file")->required();
    }
    cmd->add_option("--out", common.out_dir, "output directory")->required();
    cmd->add_option("--seed", seed_arg, "root seed override");
    cmd->add_flag("--force", common.force, "allow writing into a non-empty directory");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, true);

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train, true);
  std::string resume_path;
  train->add_option("--resume", resume_path, "checkpoint to resume from (single-stage runs)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, true);
  std::vector<int> scales_override;
  bool no_flip = false, gt_boxes_flag = false;
  int workers_override = 0;
  eval_cmd->add_option("--scales", scales_override, "TTA min-side scales")->delimiter(',');
  eval_cmd->add_flag("--no-flip", no_flip, "disable the horizontal-flip TTA variant");
  eval_cmd->add_flag("--gt-boxes", gt_boxes_flag, "evaluate with ground-truth boxes");
  eval_cmd->add_option("--workers", workers_override, "inference worker threads");

  CLI::App* ensemble = app.add_subcommand("ensemble", "average-vote over results csv files");
  add_common(ensemble, false);
  std::vector<std::string> ensemble_inputs;
  std::string ensemble_dataset;
  ensemble->add_option("inputs", ensemble_inputs, "results csv files")->required();
  ensemble->add_option("--dataset", ensemble_dataset, "dataset dir for scoring the ensemble");

  CLI::App* report = app.add_subcommand("report", "per-class AP delta between two reports");
  add_common(report, false);
  std::string before_path, after_path;
  int top_n = 20;
  report->add_option("--before", before_path, "baseline report.kv")->required();
  report->add_option("--after", after_path, "comparison report.kv")->required();
  report->add_option("--top-n", top_n, "head/tail class count for summary means");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitConfig;
  }

  if (seed_arg >= 0) common.seed = static_cast<std::uint64_t>(seed_arg);

  try {
    if (gen->parsed()) return cmd_gen_data(common);
    if (train->parsed()) return cmd_train(common, resume_path);
    if (eval_cmd->parsed()) {
      return cmd_eval(common, scales_override, no_flip, gt_boxes_flag, workers_override);
    }
    if (ensemble->parsed()) return cmd_ensemble(common, ensemble_inputs, ensemble_dataset);
    if (report->parsed()) return cmd_report(common, before_path, after_path, top_n);
  } catch (const ConfigError& e) {
    log::error(e.what());
    return kExitConfig;
  } catch (const ParseError& e) {
    log::error(e.what());
    return kExitData;
  } catch (const ValueError& e) {
    log::error(e.what());
    return kExitData;
  } catch (const IoError& e) {
    log::error(e.what());
    return kExitData;
  } catch (const std::exception& e) {
    log::error(e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
