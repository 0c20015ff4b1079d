#include "strel/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "strel/augment.hpp"
#include "strel/error.hpp"
#include "strel/heads.hpp"

namespace strel {

double iou(const Box2D& a, const Box2D& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.width() * a.height() + b.width() * b.height() - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

std::vector<GtBox> gt_from_dataset(const Dataset& ds, Split split) {
  std::vector<GtBox> out;
  for (const ClipSample* clip : ds.select(split, /*annotated_only=*/true)) {
    for (std::size_t p = 0; p < clip->num_persons(); ++p) {
      out.push_back(GtBox{clip->video_id, clip->timestamp, clip->boxes[p], clip->labels[p]});
    }
  }
  return out;
}

double EvalReport::mean_ap_over(const std::vector<int>& classes) const {
  double acc = 0.0;
  int n = 0;
  for (int k : classes) {
    const double ap = per_class_ap.at(static_cast<std::size_t>(k));
    if (std::isnan(ap)) continue;
    acc += ap;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : acc / n;
}

namespace {

std::string frame_key(const std::string& video_id, int timestamp) {
  return video_id + "\x1f" + std::to_string(timestamp);
}

}  // namespace

EvalReport frame_map_50(const std::vector<DetectionResult>& predictions,
                        const std::vector<GtBox>& ground_truth, int num_classes,
                        double iou_threshold) {
  EvalReport report;
  report.per_class_ap.assign(static_cast<std::size_t>(num_classes),
                             std::numeric_limits<double>::quiet_NaN());
  report.per_class_counts.assign(static_cast<std::size_t>(num_classes), 0);

  // Ground truth indexed per (frame, class).
  std::map<std::string, std::vector<std::size_t>> gt_by_frame;
  for (std::size_t g = 0; g < ground_truth.size(); ++g) {
    gt_by_frame[frame_key(ground_truth[g].video_id, ground_truth[g].timestamp)].push_back(g);
    for (int k = 0; k < num_classes; ++k) {
      if (ground_truth[g].labels.at(static_cast<std::size_t>(k))) {
        ++report.per_class_counts[static_cast<std::size_t>(k)];
      }
    }
  }

  double map_acc = 0.0;
  int map_classes = 0;
  for (int k = 0; k < num_classes; ++k) {
    const std::size_t n_pos = report.per_class_counts[static_cast<std::size_t>(k)];
    if (n_pos == 0) continue;  // no ground truth, class excluded from the mean

    struct Scored {
      std::size_t pred;
      double score;
    };
    std::vector<Scored> ranked;
    for (std::size_t p = 0; p < predictions.size(); ++p) {
      for (const auto& [cls, score] : predictions[p].scores) {
        if (cls == k) ranked.push_back({p, score});
      }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Scored& a, const Scored& b) { return a.score > b.score; });

    std::vector<char> gt_matched(ground_truth.size(), 0);
    std::vector<char> tp(ranked.size(), 0);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      const DetectionResult& pred = predictions[ranked[r].pred];
      auto fit = gt_by_frame.find(frame_key(pred.video_id, pred.timestamp));
      if (fit == gt_by_frame.end()) continue;  // no GT in this frame: false positive
      double best_iou = 0.0;
      std::size_t best_g = std::numeric_limits<std::size_t>::max();
      for (std::size_t g : fit->second) {
        if (gt_matched[g]) continue;
        if (!ground_truth[g].labels.at(static_cast<std::size_t>(k))) continue;
        const double v = iou(pred.box, ground_truth[g].box);
        if (v > best_iou) {
          best_iou = v;
          best_g = g;
        }
      }
      if (best_g != std::numeric_limits<std::size_t>::max() && best_iou >= iou_threshold) {
        gt_matched[best_g] = 1;
        tp[r] = 1;
      }
    }

    // Area under the precision envelope over recall.
    std::vector<double> precision(ranked.size()), recall(ranked.size());
    double cum_tp = 0.0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      cum_tp += tp[r];
      precision[r] = cum_tp / static_cast<double>(r + 1);
      recall[r] = cum_tp / static_cast<double>(n_pos);
    }
    for (std::size_t r = ranked.size(); r-- > 1;) {
      precision[r - 1] = std::max(precision[r - 1], precision[r]);
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      ap += (recall[r] - prev_recall) * precision[r];
      prev_recall = recall[r];
    }
    report.per_class_ap[static_cast<std::size_t>(k)] = ap;
    map_acc += ap;
    ++map_classes;
  }
  report.map = map_classes == 0 ? 0.0 : map_acc / map_classes;
  return report;
}

namespace {

std::vector<std::vector<double>> score_variant(const Model& model, const ClipSample& clip,
                                               const std::vector<std::vector<double>>& memory) {
  NoGradGuard ng;
  Model::ClipForward fwd = model.forward_clip(clip.frames, clip.boxes, memory);
  Tensor scores = predict_scores(fwd.logits);
  const std::size_t n = scores.shape()[0], k = scores.shape()[1];
  std::vector<std::vector<double>> out(n, std::vector<double>(k));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out[i][j] = scores.data()[i * k + j];
  }
  return out;
}

}  // namespace

std::vector<std::vector<double>> tta_infer(const Model& model, const ClipSample& clip,
                                           const TtaOptions& tta,
                                           const std::vector<std::vector<double>>& memory_vectors) {
  std::vector<ClipSample> variants;
  if (tta.scales.empty()) {
    variants.push_back(clip);
  } else {
    for (int s : tta.scales) variants.push_back(resize_clip(clip, s, tta.max_side));
  }
  if (tta.flip) {
    const std::size_t base = variants.size();
    for (std::size_t i = 0; i < base; ++i) variants.push_back(hflip_clip(variants[i]));
  }

  std::vector<std::vector<double>> acc;
  for (const ClipSample& variant : variants) {
    auto scores = score_variant(model, variant, memory_vectors);
    if (acc.empty()) {
      acc = std::move(scores);
    } else {
      for (std::size_t i = 0; i < acc.size(); ++i) {
        for (std::size_t j = 0; j < acc[i].size(); ++j) acc[i][j] += scores[i][j];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(variants.size());
  for (auto& row : acc) {
    for (double& v : row) v *= inv;
  }
  return acc;
}

std::vector<DetectionResult> infer_dataset(const Model& model, const Dataset& ds, Split split,
                                           const MemoryBank* bank, const InferOptions& opts) {
  const std::vector<const ClipSample*> clips = ds.select(split, /*annotated_only=*/true);
  std::vector<std::vector<DetectionResult>> per_clip(clips.size());

  auto process = [&](std::size_t idx) {
    const ClipSample& clip = *clips[idx];
    ClipSample eval_clip = clip;
    if (opts.boxes == BoxSource::Jittered) {
      // Per-clip substream: results do not depend on worker scheduling.
      Rng rng = Rng::substream(opts.jitter_seed,
                               msg("eval.jitter.", clip.video_id, ".", clip.timestamp));
      for (Box2D& b : eval_clip.boxes) b = box_jitter(b, opts.jitter_magnitude, rng);
    }
    std::vector<std::vector<double>> memory;
    if (model.config().head.use_memory && bank) {
      memory = bank->read_window(clip.video_id, clip.timestamp, opts.memory_window);
    }
    const auto scores = tta_infer(model, eval_clip, opts.tta, memory);
    std::vector<DetectionResult> results;
    for (std::size_t p = 0; p < eval_clip.boxes.size(); ++p) {
      DetectionResult r;
      r.video_id = clip.video_id;
      r.timestamp = clip.timestamp;
      r.box = eval_clip.boxes[p];
      for (std::size_t k = 0; k < scores[p].size(); ++k) {
        r.scores.emplace_back(static_cast<int>(k), scores[p][k]);
      }
      results.push_back(std::move(r));
    }
    per_clip[idx] = std::move(results);
  };

  const int workers = std::max(1, opts.workers);
  if (workers == 1 || clips.size() <= 1) {
    for (std::size_t i = 0; i < clips.size(); ++i) process(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= clips.size()) return;
          process(i);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<DetectionResult> out;
  for (auto& chunk : per_clip) {
    for (auto& r : chunk) out.push_back(std::move(r));
  }
  return out;
}

std::vector<DetectionResult> ensemble_average(
    const std::vector<std::vector<DetectionResult>>& result_sets) {
  if (result_sets.empty()) throw ValueError("ensemble_average: no result sets");
  auto key_of = [](const DetectionResult& r) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%.6f", r.video_id.c_str(), r.timestamp,
                  r.box.x1, r.box.y1, r.box.x2, r.box.y2);
    return std::string(buf);
  };

  std::vector<DetectionResult> out = result_sets[0];
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < out.size(); ++i) index[key_of(out[i])] = i;

  for (std::size_t s = 1; s < result_sets.size(); ++s) {
    if (result_sets[s].size() != out.size()) {
      throw ValueError(msg("ensemble_average: set ", s, " has ", result_sets[s].size(),
                           " boxes, expected ", out.size()));
    }
    for (const DetectionResult& r : result_sets[s]) {
      auto it = index.find(key_of(r));
      if (it == index.end()) {
        throw ValueError(msg("ensemble_average: set ", s, " has unmatched key ", key_of(r)));
      }
      DetectionResult& dst = out[it->second];
      if (dst.scores.size() != r.scores.size()) {
        throw ValueError(msg("ensemble_average: class list mismatch at key ", key_of(r)));
      }
      for (std::size_t j = 0; j < r.scores.size(); ++j) {
        if (dst.scores[j].first != r.scores[j].first) {
          throw ValueError(msg("ensemble_average: class list mismatch at key ", key_of(r)));
        }
        dst.scores[j].second += r.scores[j].second;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(result_sets.size());
  for (DetectionResult& r : out) {
    for (auto& [cls, score] : r.scores) score *= inv;
  }
  return out;
}

EvalOutcome gt_box_mode(const Model& model, const Dataset& ds, Split split, const MemoryBank* bank,
                        const TtaOptions& tta, int memory_window, int workers) {
  InferOptions opts;
  opts.tta = tta;
  opts.boxes = BoxSource::GroundTruth;
  opts.memory_window = memory_window;
  opts.workers = workers;
  EvalOutcome outcome;
  outcome.results = infer_dataset(model, ds, split, bank, opts);
  outcome.report = frame_map_50(outcome.results, gt_from_dataset(ds, split), ds.num_classes);
  return outcome;
}

DeltaReport per_class_delta_report(const EvalReport& before, const EvalReport& after,
                                   const std::vector<std::size_t>& counts, int n) {
  const std::size_t k = before.per_class_ap.size();
  if (after.per_class_ap.size() != k || counts.size() != k) {
    throw ValueError(msg("per_class_delta_report: class-set mismatch (", k, ", ",
                         after.per_class_ap.size(), ", ", counts.size(), ")"));
  }
  DeltaReport rep;
  rep.deltas.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    rep.deltas[i] = after.per_class_ap[i] - before.per_class_ap[i];
  }
  rep.classes_by_count.resize(k);
  for (std::size_t i = 0; i < k; ++i) rep.classes_by_count[i] = static_cast<int>(i);
  std::stable_sort(rep.classes_by_count.begin(), rep.classes_by_count.end(),
                   [&](int a, int b) { return counts[a] > counts[b]; });

  auto mean_over = [&](std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    int cnt = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double d = rep.deltas[static_cast<std::size_t>(rep.classes_by_count[i])];
      if (std::isnan(d)) continue;
      acc += d;
      ++cnt;
    }
    return cnt == 0 ? std::numeric_limits<double>::quiet_NaN() : acc / cnt;
  };
  const std::size_t top_n = std::min<std::size_t>(static_cast<std::size_t>(n), k);
  rep.top_mean = mean_over(0, top_n);
  rep.bottom_mean = mean_over(k - std::min<std::size_t>(static_cast<std::size_t>(n), k), k);

  for (std::size_t i = 0; i < k; ++i) {
    if (!std::isnan(rep.deltas[i])) rep.movers.emplace_back(static_cast<int>(i), rep.deltas[i]);
  }
  std::stable_sort(rep.movers.begin(), rep.movers.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return rep;
}

void write_report_kv(std::ostream& os, const EvalReport& report) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", report.map);
  os << "map = " << buf << '\n';
  os << "classes = " << report.per_class_ap.size() << '\n';
  for (std::size_t k = 0; k < report.per_class_ap.size(); ++k) {
    if (std::isnan(report.per_class_ap[k])) {
      os << "ap." << k << " = na\n";
    } else {
      std::snprintf(buf, sizeof(buf), "%.6f", report.per_class_ap[k]);
      os << "ap." << k << " = " << buf << '\n';
    }
    os << "count." << k << " = " << report.per_class_counts[k] << '\n';
  }
}

void write_report_table(std::ostream& os, const EvalReport& report) {
  os << "class  gt_count  ap\n";
  char buf[96];
  for (std::size_t k = 0; k < report.per_class_ap.size(); ++k) {
    if (std::isnan(report.per_class_ap[k])) {
      std::snprintf(buf, sizeof(buf), "%5zu  %8zu  %s", k, report.per_class_counts[k], "n/a");
    } else {
      std::snprintf(buf, sizeof(buf), "%5zu  %8zu  %.4f", k, report.per_class_counts[k],
                    report.per_class_ap[k]);
    }
    os << buf << '\n';
  }
  std::snprintf(buf, sizeof(buf), "mAP = %.4f", report.map);
  os << buf << '\n';
}

EvalReport read_report_kv(std::istream& is) {
  EvalReport report;
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(0, 1);
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    };
    trim(key);
    trim(value);
    kv[key] = value;
  }
  auto need = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(msg("report: missing key '", key, "'"));
    return it->second;
  };
  const std::size_t k = std::stoul(need("classes"));
  report.map = std::stod(need("map"));
  report.per_class_ap.resize(k);
  report.per_class_counts.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::string ap = need(msg("ap.", i));
    report.per_class_ap[i] = ap == "na" ? std::numeric_limits<double>::quiet_NaN() : std::stod(ap);
    report.per_class_counts[i] = std::stoul(need(msg("count.", i)));
  }
  return report;
}

}  // namespace strel
