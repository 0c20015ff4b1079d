#pragma once

// Brute-force reference implementations the fast paths are checked against.
// Everything here is written from the definitions, independent of the
// library's internal compute routes.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "strel/ava_csv.hpp"
#include "strel/data.hpp"
#include "strel/eval.hpp"

namespace strel::test {

// Index-triple-loop matrix product.
inline std::vector<double> matmul_oracle(const std::vector<double>& a,
                                         const std::vector<double>& b, std::size_t m,
                                         std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
      out[i * n + j] = acc;
    }
  }
  return out;
}

// Bilinear sample at a continuous point with half-pixel centers and clamped
// borders, written straight from the interpolation formula.
inline double bilinear_oracle(const std::vector<double>& plane, std::size_t h, std::size_t w,
                              double y, double x) {
  const double u = y - 0.5, v = x - 0.5;
  const double y0 = std::floor(u), x0 = std::floor(v);
  const double fy = u - y0, fx = v - x0;
  auto at = [&](double yy, double xx) {
    long yi = std::clamp<long>(static_cast<long>(yy), 0, static_cast<long>(h) - 1);
    long xi = std::clamp<long>(static_cast<long>(xx), 0, static_cast<long>(w) - 1);
    return plane[static_cast<std::size_t>(yi) * w + static_cast<std::size_t>(xi)];
  };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
         fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

// Pointwise RoI-Align reference: per channel/frame, average the bilinear
// samples over each bin.
inline std::vector<double> roi_align_oracle(const std::vector<double>& fmap, std::size_t c,
                                            std::size_t t, std::size_t h, std::size_t w,
                                            const Box2D& box, int out_h, int out_w, int sr) {
  std::vector<double> out(c * t * static_cast<std::size_t>(out_h) * out_w, 0.0);
  const double fx1 = box.x1 * static_cast<double>(w), fx2 = box.x2 * static_cast<double>(w);
  const double fy1 = box.y1 * static_cast<double>(h), fy2 = box.y2 * static_cast<double>(h);
  const double bin_w = (fx2 - fx1) / out_w, bin_h = (fy2 - fy1) / out_h;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ti = 0; ti < t; ++ti) {
      std::vector<double> plane(fmap.begin() + (ci * t + ti) * h * w,
                                fmap.begin() + (ci * t + ti + 1) * h * w);
      for (int by = 0; by < out_h; ++by) {
        for (int bx = 0; bx < out_w; ++bx) {
          double acc = 0.0;
          for (int py = 0; py < sr; ++py) {
            for (int px = 0; px < sr; ++px) {
              const double sy = fy1 + (by + (py + 0.5) / sr) * bin_h;
              const double sx = fx1 + (bx + (px + 0.5) / sr) * bin_w;
              acc += bilinear_oracle(plane, h, w, sy, sx);
            }
          }
          out[((ci * t + ti) * out_h + by) * out_w + bx] = acc / (sr * sr);
        }
      }
    }
  }
  return out;
}

// Exhaustive threshold-sweep AP: for every distinct score threshold, rerun
// the frame-level matching from scratch on the kept predictions and collect a
// (recall, precision) point; AP is the area under the upper envelope of those
// points. Assumes tie-free scores.
inline double ap_sweep_oracle(const std::vector<DetectionResult>& predictions,
                              const std::vector<GtBox>& ground_truth, int cls,
                              double iou_threshold = 0.5) {
  struct Entry {
    std::size_t pred;
    double score;
  };
  std::vector<Entry> entries;
  for (std::size_t p = 0; p < predictions.size(); ++p) {
    for (const auto& [k, s] : predictions[p].scores) {
      if (k == cls) entries.push_back({p, s});
    }
  }
  std::size_t n_pos = 0;
  for (const GtBox& g : ground_truth) {
    if (g.labels.at(static_cast<std::size_t>(cls))) ++n_pos;
  }
  if (n_pos == 0) return std::numeric_limits<double>::quiet_NaN();

  std::set<double, std::greater<double>> thresholds;
  for (const Entry& e : entries) thresholds.insert(e.score);

  auto match_count = [&](double theta) {
    std::vector<Entry> kept;
    for (const Entry& e : entries) {
      if (e.score >= theta) kept.push_back(e);
    }
    std::sort(kept.begin(), kept.end(), [](const Entry& a, const Entry& b) {
      return a.score > b.score;
    });
    std::vector<char> used(ground_truth.size(), 0);
    std::size_t tp = 0;
    for (const Entry& e : kept) {
      const DetectionResult& pr = predictions[e.pred];
      double best = 0.0;
      std::size_t best_g = ground_truth.size();
      for (std::size_t g = 0; g < ground_truth.size(); ++g) {
        if (used[g]) continue;
        if (!ground_truth[g].labels.at(static_cast<std::size_t>(cls))) continue;
        if (ground_truth[g].video_id != pr.video_id || ground_truth[g].timestamp != pr.timestamp) {
          continue;
        }
        const double v = iou(pr.box, ground_truth[g].box);
        if (v > best) {
          best = v;
          best_g = g;
        }
      }
      if (best_g != ground_truth.size() && best >= iou_threshold) {
        used[best_g] = 1;
        ++tp;
      }
    }
    return std::pair<std::size_t, std::size_t>(tp, kept.size());
  };

  std::vector<std::pair<double, double>> points;  // (recall, precision)
  for (double theta : thresholds) {
    auto [tp, total] = match_count(theta);
    if (total == 0) continue;
    points.emplace_back(static_cast<double>(tp) / static_cast<double>(n_pos),
                        static_cast<double>(tp) / static_cast<double>(total));
  }
  std::sort(points.begin(), points.end());
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double envelope = 0.0;
    for (std::size_t j = i; j < points.size(); ++j) envelope = std::max(envelope, points[j].second);
    ap += (points[i].first - prev_recall) * envelope;
    prev_recall = points[i].first;
  }
  return ap;
}

}  // namespace strel::test
