#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "strel/data.hpp"
#include "strel/eval.hpp"
#include "strel/model.hpp"
#include "strel/strategies.hpp"
#include "strel/train.hpp"

namespace strel {

// Sectioned key=value configuration. '#' and ';' start comments. Parsing is
// strict: duplicate keys are rejected, and the typed readers below reject any
// key they do not recognize.
class IniConfig {
 public:
  static IniConfig parse_file(const std::string& path);
  static IniConfig parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;
  const std::map<std::string, std::string>& section(const std::string& name) const;
  std::vector<std::string> section_names() const;

  std::string get(const std::string& section, const std::string& key) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

// Tracks which keys a reader consumed so leftovers can be rejected by name.
class ConfigReader {
 public:
  explicit ConfigReader(const IniConfig& cfg) : cfg_(cfg) {}

  std::string str(const std::string& section, const std::string& key, const std::string& fallback);
  std::string require_str(const std::string& section, const std::string& key);
  long integer(const std::string& section, const std::string& key, long fallback);
  double real(const std::string& section, const std::string& key, double fallback);
  bool boolean(const std::string& section, const std::string& key, bool fallback);
  std::vector<long> int_list(const std::string& section, const std::string& key,
                             std::vector<long> fallback);

  // Throws ConfigError naming every key that no reader consumed.
  void reject_unknown() const;

 private:
  const IniConfig& cfg_;
  std::set<std::pair<std::string, std::string>> consumed_;
};

struct GenDataSetup {
  SyntheticSpec spec;
  void write_resolved(std::ostream& os) const;
};
GenDataSetup read_gen_config(const IniConfig& cfg, std::optional<std::uint64_t> seed_override);

struct TrainSetup {
  ModelConfig model;
  std::string dataset_a;
  std::string dataset_k;  // empty = none
  Strategy strategy = Strategy::None;
  TrainConfig stage1;
  TrainConfig stage2;
  bool decoupled = false;
  TrainConfig decoupled_cfg;
  int memory_window = 4;
  std::uint64_t seed = 0;
  void write_resolved(std::ostream& os) const;
};
TrainSetup read_train_config(const IniConfig& cfg, std::optional<std::uint64_t> seed_override);

struct EvalSetup {
  ModelConfig model;
  std::string dataset;
  std::string checkpoint;
  TtaOptions tta;
  bool gt_boxes = false;
  double box_jitter = 0.1;
  int workers = 1;
  int memory_window = 4;
  Split split = Split::Val;
  std::uint64_t seed = 0;
  void write_resolved(std::ostream& os) const;
};
EvalSetup read_eval_config(const IniConfig& cfg, std::optional<std::uint64_t> seed_override);

// Shared [model]/[head] reader (train and eval configs must agree on it).
ModelConfig read_model_config(ConfigReader& r);

}  // namespace strel
