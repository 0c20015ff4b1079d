#pragma once

#include <string>
#include <utility>
#include <vector>

#include "strel/data.hpp"

namespace strel {

// One CSV annotation row: video_id,timestamp,x1,y1,x2,y2,action_id,last.
// The trailing column is a person id in ground-truth files and a confidence
// score in detection files; both parse as `last`.
struct AvaRow {
  std::string video_id;
  int timestamp = 0;
  Box2D box;
  int action_id = 0;
  double last = 0.0;
};

std::vector<AvaRow> parse_ava_csv(const std::string& path);

// Per-person detection output: sparse (class id, score) pairs sorted by class.
struct DetectionResult {
  std::string video_id;
  int timestamp = 0;
  Box2D box;
  std::vector<std::pair<int, double>> scores;
};

// One line per stored (box, class) pair with 6-decimal fixed formatting;
// parse_ava_csv round-trips the output.
void emit_results_csv(const std::vector<DetectionResult>& results, const std::string& path);

// Groups detection rows back into per-box results (inverse of emit).
std::vector<DetectionResult> results_from_rows(const std::vector<AvaRow>& rows);

}  // namespace strel
