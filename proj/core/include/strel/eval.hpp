#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "strel/ava_csv.hpp"
#include "strel/data.hpp"
#include "strel/memory_bank.hpp"
#include "strel/model.hpp"

namespace strel {

double iou(const Box2D& a, const Box2D& b);

struct GtBox {
  std::string video_id;
  int timestamp = 0;
  Box2D box;
  std::vector<int> labels;  // multi-hot, K entries
};

std::vector<GtBox> gt_from_dataset(const Dataset& ds, Split split);

struct EvalReport {
  std::vector<double> per_class_ap;  // NaN for classes without ground truth
  double map = 0.0;
  std::vector<std::size_t> per_class_counts;

  // Mean AP over a chosen subset of classes (skipping empty ones).
  double mean_ap_over(const std::vector<int>& classes) const;
};

// Frame-level mAP at the given IoU threshold. Per class, predictions sort by
// score (stable on ties) and greedily match the highest-IoU unmatched ground
// truth in the same frame; AP is the area under the precision envelope
// (all-point interpolation). Classes without ground truth are skipped by the
// mean.
EvalReport frame_map_50(const std::vector<DetectionResult>& predictions,
                        const std::vector<GtBox>& ground_truth, int num_classes,
                        double iou_threshold = 0.5);

struct TtaOptions {
  std::vector<int> scales;  // min sides; empty means native resolution
  int max_side = 464;
  bool flip = true;
};

// Averages per-person scores over all resize/flip variants. Boxes are
// normalized, so persons align by index; flipped boxes map back through the
// flip before scoring.
std::vector<std::vector<double>> tta_infer(const Model& model, const ClipSample& clip,
                                           const TtaOptions& tta,
                                           const std::vector<std::vector<double>>& memory_vectors);

enum class BoxSource { GroundTruth, Jittered };

struct InferOptions {
  TtaOptions tta;
  BoxSource boxes = BoxSource::GroundTruth;
  double jitter_magnitude = 0.1;
  std::uint64_t jitter_seed = 0;
  int workers = 1;
  int memory_window = 4;
};

// Inference over every annotated clip of a split. When the model uses memory,
// `bank` supplies the window reads. Results come back in clip order
// regardless of worker count.
std::vector<DetectionResult> infer_dataset(const Model& model, const Dataset& ds, Split split,
                                           const MemoryBank* bank, const InferOptions& opts);

// Per-key arithmetic mean of scores across result sets. Every set must cover
// the same (video, timestamp, box) keys and class lists.
std::vector<DetectionResult> ensemble_average(
    const std::vector<std::vector<DetectionResult>>& result_sets);

struct EvalOutcome {
  std::vector<DetectionResult> results;
  EvalReport report;
};

// Ground-truth-box oracle evaluation: inference on GT boxes, scored as usual.
EvalOutcome gt_box_mode(const Model& model, const Dataset& ds, Split split, const MemoryBank* bank,
                        const TtaOptions& tta, int memory_window = 4, int workers = 1);

struct DeltaReport {
  std::vector<double> deltas;            // after - before, NaN where either side is NaN
  std::vector<int> classes_by_count;     // class ids, most labeled first
  double top_mean = 0.0;                 // mean delta over the top-n most labeled classes
  double bottom_mean = 0.0;              // mean delta over the bottom-n
  std::vector<std::pair<int, double>> movers;  // classes ranked by delta, best first
};

DeltaReport per_class_delta_report(const EvalReport& before, const EvalReport& after,
                                   const std::vector<std::size_t>& counts, int n = 20);

// Report serialization: machine-readable key=value lines and a human table.
void write_report_kv(std::ostream& os, const EvalReport& report);
void write_report_table(std::ostream& os, const EvalReport& report);
EvalReport read_report_kv(std::istream& is);

}  // namespace strel
