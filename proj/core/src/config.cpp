#include "strel/config.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "strel/error.hpp"

namespace strel {

namespace {

std::string trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(0, 1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

}  // namespace

IniConfig IniConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError(msg("config: cannot open '", path, "'"));
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_string(buf.str(), path);
}

IniConfig IniConfig::parse_string(const std::string& text, const std::string& origin) {
  IniConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(msg(origin, ":", line_no, ": malformed section header"));
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(msg(origin, ":", line_no, ": empty section name"));
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(msg(origin, ":", line_no, ": expected key = value"));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(msg(origin, ":", line_no, ": empty key"));
    if (section.empty()) {
      throw ConfigError(msg(origin, ":", line_no, ": key '", key, "' outside any section"));
    }
    auto& sec = cfg.sections_[section];
    if (sec.contains(key)) {
      throw ConfigError(msg(origin, ":", line_no, ": duplicate key '", key, "' in [", section, "]"));
    }
    sec[key] = value;
  }
  return cfg;
}

bool IniConfig::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.contains(key);
}

const std::map<std::string, std::string>& IniConfig::section(const std::string& name) const {
  static const std::map<std::string, std::string> empty;
  auto it = sections_.find(name);
  return it == sections_.end() ? empty : it->second;
}

std::vector<std::string> IniConfig::section_names() const {
  std::vector<std::string> out;
  for (const auto& [name, kv] : sections_) out.push_back(name);
  return out;
}

std::string IniConfig::get(const std::string& section_name, const std::string& key) const {
  if (!has(section_name, key)) {
    throw ConfigError(msg("config: missing key '", key, "' in [", section_name, "]"));
  }
  return section(section_name).at(key);
}

std::string ConfigReader::str(const std::string& section, const std::string& key,
                              const std::string& fallback) {
  consumed_.insert({section, key});
  return cfg_.has(section, key) ? cfg_.get(section, key) : fallback;
}

std::string ConfigReader::require_str(const std::string& section, const std::string& key) {
  consumed_.insert({section, key});
  return cfg_.get(section, key);
}

long ConfigReader::integer(const std::string& section, const std::string& key, long fallback) {
  consumed_.insert({section, key});
  if (!cfg_.has(section, key)) return fallback;
  const std::string v = cfg_.get(section, key);
  char* end = nullptr;
  const long out = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError(msg("config: [", section, "] ", key, " = '", v, "' is not an integer"));
  }
  return out;
}

double ConfigReader::real(const std::string& section, const std::string& key, double fallback) {
  consumed_.insert({section, key});
  if (!cfg_.has(section, key)) return fallback;
  const std::string v = cfg_.get(section, key);
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError(msg("config: [", section, "] ", key, " = '", v, "' is not a number"));
  }
  return out;
}

bool ConfigReader::boolean(const std::string& section, const std::string& key, bool fallback) {
  consumed_.insert({section, key});
  if (!cfg_.has(section, key)) return fallback;
  const std::string v = cfg_.get(section, key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(msg("config: [", section, "] ", key, " = '", v, "' is not a boolean"));
}

std::vector<long> ConfigReader::int_list(const std::string& section, const std::string& key,
                                         std::vector<long> fallback) {
  consumed_.insert({section, key});
  if (!cfg_.has(section, key)) return fallback;
  const std::string v = cfg_.get(section, key);
  std::vector<long> out;
  std::string cur;
  auto flush = [&] {
    cur = trim(cur);
    if (cur.empty()) return;
    char* end = nullptr;
    const long x = std::strtol(cur.c_str(), &end, 10);
    if (end == cur.c_str() || *end != '\0') {
      throw ConfigError(msg("config: [", section, "] ", key, ": bad list entry '", cur, "'"));
    }
    out.push_back(x);
    cur.clear();
  };
  for (char ch : v) {
    if (ch == ',') {
      flush();
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return out;
}

void ConfigReader::reject_unknown() const {
  std::string unknown;
  for (const std::string& sec : cfg_.section_names()) {
    for (const auto& [key, value] : cfg_.section(sec)) {
      if (!consumed_.contains({sec, key})) {
        unknown += msg(unknown.empty() ? "" : ", ", "[", sec, "] ", key);
      }
    }
  }
  if (!unknown.empty()) throw ConfigError(msg("config: unknown keys: ", unknown));
}

namespace {

std::vector<int> to_int_vec(const std::vector<long>& v) {
  return std::vector<int>(v.begin(), v.end());
}

TrainConfig read_train_section(ConfigReader& r, const std::string& section,
                               const TrainConfig& defaults, std::uint64_t seed) {
  TrainConfig cfg = defaults;
  cfg.base_lr = r.real(section, "base_lr", defaults.base_lr);
  cfg.batch_size = static_cast<int>(r.integer(section, "batch_size", defaults.batch_size));
  cfg.weight_decay = r.real(section, "weight_decay", defaults.weight_decay);
  cfg.total_iters = r.integer(section, "total_iters", defaults.total_iters);
  cfg.warmup_iters = r.integer(section, "warmup_iters", defaults.warmup_iters);
  cfg.milestones = r.int_list(section, "milestones",
                              std::vector<long>(defaults.milestones.begin(),
                                                defaults.milestones.end()));
  cfg.lr_gamma = r.real(section, "lr_gamma", defaults.lr_gamma);
  cfg.momentum = r.real(section, "momentum", defaults.momentum);
  cfg.box_jitter_magnitude = r.real(section, "box_jitter", defaults.box_jitter_magnitude);
  cfg.color_jitter_strength = r.real(section, "color_jitter", defaults.color_jitter_strength);
  cfg.checkpoint_every = r.integer(section, "checkpoint_every", defaults.checkpoint_every);
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

void write_train_section(std::ostream& os, const std::string& name, const TrainConfig& cfg) {
  os << "[" << name << "]\n";
  os << "base_lr = " << cfg.base_lr << '\n';
  os << "batch_size = " << cfg.batch_size << '\n';
  os << "weight_decay = " << cfg.weight_decay << '\n';
  os << "total_iters = " << cfg.total_iters << '\n';
  os << "warmup_iters = " << cfg.warmup_iters << '\n';
  os << "milestones = ";
  for (std::size_t i = 0; i < cfg.milestones.size(); ++i) {
    os << (i ? "," : "") << cfg.milestones[i];
  }
  os << '\n';
  os << "lr_gamma = " << cfg.lr_gamma << '\n';
  os << "momentum = " << cfg.momentum << '\n';
  os << "box_jitter = " << cfg.box_jitter_magnitude << '\n';
  os << "color_jitter = " << cfg.color_jitter_strength << '\n';
  os << "checkpoint_every = " << cfg.checkpoint_every << '\n';
}

}  // namespace

ModelConfig read_model_config(ConfigReader& r) {
  ModelConfig m;
  m.backbone.in_channels = static_cast<int>(r.integer("model", "in_channels", 3));
  m.backbone.channels = to_int_vec(r.int_list("model", "channels", {16, 32, 64}));
  {
    std::vector<long> def(m.backbone.channels.size(), 2);
    m.backbone.spatial_strides = to_int_vec(r.int_list("model", "spatial_strides", def));
    std::vector<long> deft(m.backbone.channels.size(), 1);
    m.backbone.temporal_strides = to_int_vec(r.int_list("model", "temporal_strides", deft));
  }
  m.roi_h = static_cast<int>(r.integer("model", "roi_h", 7));
  m.roi_w = static_cast<int>(r.integer("model", "roi_w", 7));
  m.sampling_ratio = static_cast<int>(r.integer("model", "sampling_ratio", 2));
  m.attn_heads = static_cast<int>(r.integer("model", "attn_heads", 4));

  const std::string type = r.str("head", "type", "t_only");
  if (type == "linear") {
    m.head.type = HeadType::Linear;
  } else if (type == "s_only") {
    m.head.type = HeadType::SOnly;
  } else if (type == "t_only") {
    m.head.type = HeadType::TOnly;
  } else {
    throw ConfigError(msg("config: [head] type = '", type, "' (linear|s_only|t_only)"));
  }
  const std::string agg = r.str("head", "agg", "mean");
  if (agg == "mean") {
    m.head.agg = Agg::Mean;
  } else if (agg == "max") {
    m.head.agg = Agg::Max;
  } else {
    throw ConfigError(msg("config: [head] agg = '", agg, "' (mean|max)"));
  }
  m.head.num_classes = static_cast<int>(r.integer("head", "num_classes", 3));
  m.head.use_memory = r.boolean("head", "use_memory", false);
  m.validate();
  return m;
}

namespace {

void write_model_config(std::ostream& os, const ModelConfig& m) {
  os << "[model]\n";
  os << "in_channels = " << m.backbone.in_channels << '\n';
  auto list = [&os](const char* key, const std::vector<int>& v) {
    os << key << " = ";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << '\n';
  };
  list("channels", m.backbone.channels);
  list("spatial_strides", m.backbone.spatial_strides);
  list("temporal_strides", m.backbone.temporal_strides);
  os << "roi_h = " << m.roi_h << '\n';
  os << "roi_w = " << m.roi_w << '\n';
  os << "sampling_ratio = " << m.sampling_ratio << '\n';
  os << "attn_heads = " << m.attn_heads << '\n';
  os << "[head]\n";
  os << "type = "
     << (m.head.type == HeadType::Linear ? "linear"
                                         : m.head.type == HeadType::SOnly ? "s_only" : "t_only")
     << '\n';
  os << "agg = " << (m.head.agg == Agg::Mean ? "mean" : "max") << '\n';
  os << "num_classes = " << m.head.num_classes << '\n';
  os << "use_memory = " << (m.head.use_memory ? "true" : "false") << '\n';
}

}  // namespace

GenDataSetup read_gen_config(const IniConfig& cfg, std::optional<std::uint64_t> seed_override) {
  ConfigReader r(cfg);
  GenDataSetup setup;
  SyntheticSpec& s = setup.spec;
  s.num_videos = static_cast<int>(r.integer("data", "num_videos", s.num_videos));
  s.clips_per_video = static_cast<int>(r.integer("data", "clips_per_video", s.clips_per_video));
  s.persons_min = static_cast<int>(r.integer("data", "persons_min", s.persons_min));
  s.persons_max = static_cast<int>(r.integer("data", "persons_max", s.persons_max));
  s.t = static_cast<int>(r.integer("data", "t", s.t));
  s.h = static_cast<int>(r.integer("data", "h", s.h));
  s.w = static_cast<int>(r.integer("data", "w", s.w));
  s.q = static_cast<int>(r.integer("data", "q", s.q));
  s.persist_prob = r.real("data", "persist_prob", s.persist_prob);
  s.upper_half_prob = r.real("data", "upper_half_prob", s.upper_half_prob);
  s.label_window = static_cast<int>(r.integer("data", "label_window", s.label_window));
  s.signature_channel = static_cast<int>(r.integer("data", "signature_channel", s.signature_channel));
  s.noise_amplitude = r.real("data", "noise_amplitude", s.noise_amplitude);
  s.annotate_single = r.boolean("data", "annotate_single", s.annotate_single);
  s.val_fraction = r.real("data", "val_fraction", s.val_fraction);
  s.id_prefix = r.str("data", "id_prefix", s.id_prefix);
  s.seed = static_cast<std::uint64_t>(r.integer("data", "seed", 0));
  if (seed_override) s.seed = *seed_override;
  r.reject_unknown();
  s.validate();
  return setup;
}

void GenDataSetup::write_resolved(std::ostream& os) const {
  const SyntheticSpec& s = spec;
  os << "[data]\n";
  os << "num_videos = " << s.num_videos << '\n';
  os << "clips_per_video = " << s.clips_per_video << '\n';
  os << "persons_min = " << s.persons_min << '\n';
  os << "persons_max = " << s.persons_max << '\n';
  os << "t = " << s.t << '\n';
  os << "h = " << s.h << '\n';
  os << "w = " << s.w << '\n';
  os << "q = " << s.q << '\n';
  os << "persist_prob = " << s.persist_prob << '\n';
  os << "upper_half_prob = " << s.upper_half_prob << '\n';
  os << "label_window = " << s.label_window << '\n';
  os << "signature_channel = " << s.signature_channel << '\n';
  os << "noise_amplitude = " << s.noise_amplitude << '\n';
  os << "annotate_single = " << (s.annotate_single ? "true" : "false") << '\n';
  os << "val_fraction = " << s.val_fraction << '\n';
  os << "id_prefix = " << s.id_prefix << '\n';
  os << "seed = " << s.seed << '\n';
}

TrainSetup read_train_config(const IniConfig& cfg, std::optional<std::uint64_t> seed_override) {
  ConfigReader r(cfg);
  TrainSetup setup;
  setup.model = read_model_config(r);
  setup.memory_window = static_cast<int>(r.integer("head", "memory_window", 4));
  setup.dataset_a = r.require_str("datasets", "a");
  setup.dataset_k = r.str("datasets", "k", "");
  setup.seed = static_cast<std::uint64_t>(r.integer("train", "seed", 0));
  if (seed_override) setup.seed = *seed_override;

  const std::string strat = r.str("train", "strategy", "none");
  if (strat == "none") {
    setup.strategy = Strategy::None;
  } else if (strat == "a") {
    setup.strategy = Strategy::A;
  } else if (strat == "b") {
    setup.strategy = Strategy::B;
  } else if (strat == "c") {
    setup.strategy = Strategy::C;
  } else {
    throw ConfigError(msg("config: [train] strategy = '", strat, "' (none|a|b|c)"));
  }

  TrainConfig base;
  setup.stage1 = read_train_section(r, "train", base, setup.seed);
  TrainConfig stage2_default = setup.stage1;
  stage2_default.total_iters = std::max<long>(1, setup.stage1.total_iters / 2);
  stage2_default.warmup_iters = std::max<long>(1, setup.stage1.warmup_iters / 2);
  stage2_default.milestones.clear();
  setup.stage2 = read_train_section(r, "stage2", stage2_default, setup.seed);

  setup.decoupled = r.boolean("decoupled", "enabled", false);
  TrainConfig dec_default = setup.stage1;
  dec_default.total_iters = std::max<long>(1, setup.stage1.total_iters / 4);
  dec_default.warmup_iters = std::max<long>(1, setup.stage1.warmup_iters / 4);
  dec_default.milestones.clear();
  dec_default.base_lr = setup.stage1.base_lr * 0.1;
  setup.decoupled_cfg = read_train_section(r, "decoupled", dec_default, setup.seed);

  r.reject_unknown();
  if ((setup.strategy == Strategy::B || setup.strategy == Strategy::C) && setup.dataset_k.empty()) {
    throw ConfigError("config: strategies b and c need [datasets] k");
  }
  return setup;
}

void TrainSetup::write_resolved(std::ostream& os) const {
  write_model_config(os, model);
  os << "memory_window = " << memory_window << '\n';
  os << "[datasets]\n";
  os << "a = " << dataset_a << '\n';
  if (!dataset_k.empty()) os << "k = " << dataset_k << '\n';
  write_train_section(os, "train", stage1);
  os << "strategy = "
     << (strategy == Strategy::None ? "none"
                                    : strategy == Strategy::A ? "a"
                                                              : strategy == Strategy::B ? "b" : "c")
     << '\n';
  os << "seed = " << seed << '\n';
  if (strategy != Strategy::None) write_train_section(os, "stage2", stage2);
  if (decoupled) {
    write_train_section(os, "decoupled", decoupled_cfg);
    os << "enabled = true\n";
  }
}

EvalSetup read_eval_config(const IniConfig& cfg, std::optional<std::uint64_t> seed_override) {
  ConfigReader r(cfg);
  EvalSetup setup;
  setup.model = read_model_config(r);
  setup.memory_window = static_cast<int>(r.integer("head", "memory_window", 4));
  setup.dataset = r.require_str("eval", "dataset");
  setup.checkpoint = r.require_str("eval", "checkpoint");
  {
    std::vector<long> scales = r.int_list("eval", "scales", {});
    setup.tta.scales.assign(scales.begin(), scales.end());
  }
  setup.tta.max_side = static_cast<int>(r.integer("eval", "max_side", 464));
  setup.tta.flip = r.boolean("eval", "flip", true);
  setup.gt_boxes = r.boolean("eval", "gt_boxes", false);
  setup.box_jitter = r.real("eval", "box_jitter", 0.1);
  setup.workers = static_cast<int>(r.integer("eval", "workers", 1));
  const std::string split = r.str("eval", "split", "val");
  if (split == "val") {
    setup.split = Split::Val;
  } else if (split == "train") {
    setup.split = Split::Train;
  } else {
    throw ConfigError(msg("config: [eval] split = '", split, "' (train|val)"));
  }
  setup.seed = static_cast<std::uint64_t>(r.integer("eval", "seed", 0));
  if (seed_override) setup.seed = *seed_override;
  r.reject_unknown();
  return setup;
}

void EvalSetup::write_resolved(std::ostream& os) const {
  write_model_config(os, model);
  os << "memory_window = " << memory_window << '\n';
  os << "[eval]\n";
  os << "dataset = " << dataset << '\n';
  os << "checkpoint = " << checkpoint << '\n';
  os << "scales = ";
  for (std::size_t i = 0; i < tta.scales.size(); ++i) os << (i ? "," : "") << tta.scales[i];
  os << '\n';
  os << "max_side = " << tta.max_side << '\n';
  os << "flip = " << (tta.flip ? "true" : "false") << '\n';
  os << "gt_boxes = " << (gt_boxes ? "true" : "false") << '\n';
  os << "box_jitter = " << box_jitter << '\n';
  os << "workers = " << workers << '\n';
  os << "split = " << (split == Split::Val ? "val" : "train") << '\n';
  os << "seed = " << seed << '\n';
}

}  // namespace strel
