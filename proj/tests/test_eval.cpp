#include <doctest.h>

#include <cmath>
#include <sstream>

#include "strel/augment.hpp"
#include "strel/error.hpp"
#include "strel/eval.hpp"
#include "strel/strategies.hpp"
#include "strel/train.hpp"
#include "support/oracles.hpp"

using namespace strel;

namespace {

GtBox gt(const std::string& vid, int t, Box2D box, std::vector<int> labels) {
  return GtBox{vid, t, box, std::move(labels)};
}

DetectionResult det(const std::string& vid, int t, Box2D box,
                    std::vector<std::pair<int, double>> scores) {
  DetectionResult r;
  r.video_id = vid;
  r.timestamp = t;
  r.box = box;
  r.scores = std::move(scores);
  return r;
}

}  // namespace

TEST_CASE("iou basics") {
  Box2D a{0.1, 0.1, 0.5, 0.5};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  Box2D b{0.6, 0.6, 0.9, 0.9};
  CHECK(iou(a, b) == 0.0);
  // (0,0,2,2) vs (1,1,3,3) scaled into [0,1] by /4: intersection 1, union 7.
  Box2D c{0.0, 0.0, 0.5, 0.5}, d{0.25, 0.25, 0.75, 0.75};
  CHECK(iou(c, d) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("single matched prediction gives AP 1") {
  Box2D g{0.2, 0.2, 0.6, 0.6};
  Box2D p{0.22, 0.2, 0.6, 0.62};  // IoU > 0.5
  REQUIRE(iou(g, p) > 0.5);
  auto report = frame_map_50({det("v", 1, p, {{0, 0.9}})}, {gt("v", 1, g, {1})}, 1);
  CHECK(report.per_class_ap[0] == doctest::Approx(1.0));
  CHECK(report.map == doctest::Approx(1.0));
  CHECK(report.per_class_counts[0] == 1);
}

TEST_CASE("high-scored miss then low-scored hit gives AP 0.5") {
  Box2D g{0.2, 0.2, 0.6, 0.6};
  Box2D miss{0.7, 0.7, 0.9, 0.9};
  auto report = frame_map_50(
      {det("v", 1, miss, {{0, 0.9}}), det("v", 1, g, {{0, 0.4}})},
      {gt("v", 1, g, {1})}, 1);
  CHECK(report.per_class_ap[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("classes without ground truth are excluded from the mean") {
  Box2D g{0.2, 0.2, 0.6, 0.6};
  auto report = frame_map_50({det("v", 1, g, {{0, 0.9}, {1, 0.9}})}, {gt("v", 1, g, {1, 0})}, 2);
  CHECK(std::isnan(report.per_class_ap[1]));
  CHECK(report.map == doctest::Approx(report.per_class_ap[0]));
}

TEST_CASE("a trailing zero-score false positive leaves AP unchanged") {
  Box2D g{0.2, 0.2, 0.6, 0.6};
  Box2D far{0.8, 0.8, 0.95, 0.95};
  std::vector<GtBox> truth = {gt("v", 1, g, {1}), gt("v", 2, g, {1})};
  std::vector<DetectionResult> preds = {det("v", 1, g, {{0, 0.9}}),
                                        det("v", 2, far, {{0, 0.5}}),
                                        det("v", 2, g, {{0, 0.3}})};
  const double base = frame_map_50(preds, truth, 1).per_class_ap[0];
  preds.push_back(det("v", 1, far, {{0, 0.0}}));
  const double with_extra = frame_map_50(preds, truth, 1).per_class_ap[0];
  CHECK(with_extra == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("ap stays within [0,1] and matches the sweep oracle on random instances") {
  Rng rng(71);
  for (int trial = 0; trial < 1000; ++trial) {
    const int num_classes = 1 + static_cast<int>(rng.uniform_int(0, 2));
    const int n_gt = 1 + static_cast<int>(rng.uniform_int(0, 3));
    const int n_pred = 1 + static_cast<int>(rng.uniform_int(0, 5));
    std::vector<GtBox> truth;
    for (int g = 0; g < n_gt; ++g) {
      Box2D b;
      b.x1 = rng.uniform(0.0, 0.6);
      b.y1 = rng.uniform(0.0, 0.6);
      b.x2 = b.x1 + rng.uniform(0.05, 0.35);
      b.y2 = b.y1 + rng.uniform(0.05, 0.35);
      std::vector<int> labels(num_classes);
      bool any = false;
      for (int k = 0; k < num_classes; ++k) {
        labels[k] = rng.uniform() < 0.6 ? 1 : 0;
        any |= labels[k] == 1;
      }
      if (!any) labels[0] = 1;
      truth.push_back(gt(rng.uniform() < 0.5 ? "v1" : "v2", static_cast<int>(rng.uniform_int(1, 2)),
                         b, labels));
    }
    std::vector<DetectionResult> preds;
    for (int p = 0; p < n_pred; ++p) {
      Box2D b;
      if (rng.uniform() < 0.6) {
        const GtBox& target = truth[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<long>(truth.size()) - 1))];
        b = target.box;
        b.x1 = std::max(0.0, b.x1 + rng.uniform(-0.05, 0.05));
        b.y1 = std::max(0.0, b.y1 + rng.uniform(-0.05, 0.05));
        b.x2 = std::min(1.0, b.x2 + rng.uniform(-0.05, 0.05));
        b.y2 = std::min(1.0, b.y2 + rng.uniform(-0.05, 0.05));
      } else {
        b.x1 = rng.uniform(0.0, 0.7);
        b.y1 = rng.uniform(0.0, 0.7);
        b.x2 = b.x1 + rng.uniform(0.05, 0.29);
        b.y2 = b.y1 + rng.uniform(0.05, 0.29);
      }
      std::vector<std::pair<int, double>> scores;
      for (int k = 0; k < num_classes; ++k) scores.emplace_back(k, rng.uniform());
      preds.push_back(det(rng.uniform() < 0.5 ? "v1" : "v2",
                          static_cast<int>(rng.uniform_int(1, 2)), b, std::move(scores)));
    }

    EvalReport report = frame_map_50(preds, truth, num_classes);
    CHECK(report.map >= 0.0);
    CHECK(report.map <= 1.0);
    for (int k = 0; k < num_classes; ++k) {
      const double oracle = test::ap_sweep_oracle(preds, truth, k);
      const double fast = report.per_class_ap[static_cast<std::size_t>(k)];
      if (std::isnan(oracle)) {
        CHECK(std::isnan(fast));
      } else {
        CHECK(fast == doctest::Approx(oracle).epsilon(1e-9));
        CHECK(fast >= 0.0);
        CHECK(fast <= 1.0);
      }
    }
  }
}

TEST_CASE("score ties keep deterministic stable order") {
  Box2D g{0.2, 0.2, 0.6, 0.6};
  Box2D far{0.8, 0.8, 0.95, 0.95};
  // Same score: the first-listed (miss) is ranked first by stable order.
  auto r1 = frame_map_50({det("v", 1, far, {{0, 0.5}}), det("v", 1, g, {{0, 0.5}})},
                         {gt("v", 1, g, {1})}, 1);
  CHECK(r1.per_class_ap[0] == doctest::Approx(0.5));
  auto r2 = frame_map_50({det("v", 1, g, {{0, 0.5}}), det("v", 1, far, {{0, 0.5}})},
                         {gt("v", 1, g, {1})}, 1);
  CHECK(r2.per_class_ap[0] == doctest::Approx(1.0));
}

TEST_CASE("ensemble averaging: identity, mean and commutativity") {
  Box2D b{0.1, 0.1, 0.5, 0.5};
  auto one = std::vector<DetectionResult>{det("v", 1, b, {{0, 0.1}, {1, 0.7}})};
  auto two = std::vector<DetectionResult>{det("v", 1, b, {{0, 0.5}, {1, 0.1}})};

  auto same = ensemble_average({one});
  CHECK(same[0].scores[0].second == doctest::Approx(0.1));

  auto merged = ensemble_average({one, two});
  CHECK(merged[0].scores[0].second == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(merged[0].scores[1].second == doctest::Approx(0.4).epsilon(1e-12));

  auto swapped = ensemble_average({two, one});
  for (std::size_t i = 0; i < merged[0].scores.size(); ++i) {
    CHECK(merged[0].scores[i].second == doctest::Approx(swapped[0].scores[i].second));
  }

  // Duplicated input equals the single input.
  auto dup = ensemble_average({one, one});
  for (std::size_t i = 0; i < one[0].scores.size(); ++i) {
    CHECK(dup[0].scores[i].second == doctest::Approx(one[0].scores[i].second));
  }
}

TEST_CASE("ensemble rejects key mismatches naming the offender") {
  Box2D b{0.1, 0.1, 0.5, 0.5};
  Box2D other{0.2, 0.2, 0.6, 0.6};
  auto one = std::vector<DetectionResult>{det("v", 1, b, {{0, 0.1}})};
  auto two = std::vector<DetectionResult>{det("v", 1, other, {{0, 0.5}})};
  try {
    ensemble_average({one, two});
    FAIL("expected ValueError");
  } catch (const ValueError& e) {
    CHECK(std::string(e.what()).find("v,1") != std::string::npos);
  }
}

TEST_CASE("delta report: zeros, antisymmetry, ranked summaries") {
  EvalReport a, b;
  a.per_class_ap = {0.5, 0.2, 0.9, 0.4};
  b.per_class_ap = {0.6, 0.1, 0.9, 0.7};
  a.per_class_counts = b.per_class_counts = {100, 50, 10, 5};
  a.map = 0.5;
  b.map = 0.575;

  DeltaReport self = per_class_delta_report(a, a, a.per_class_counts, 2);
  for (double d : self.deltas) CHECK(d == 0.0);

  DeltaReport ab = per_class_delta_report(a, b, a.per_class_counts, 2);
  DeltaReport ba = per_class_delta_report(b, a, a.per_class_counts, 2);
  for (std::size_t i = 0; i < ab.deltas.size(); ++i) {
    CHECK(ab.deltas[i] == doctest::Approx(-ba.deltas[i]));
  }

  // classes ranked by count: {0,1,2,3}; top-2 mean = (0.1 + -0.1)/2 = 0,
  // bottom-2 mean = (0 + 0.3)/2 = 0.15
  CHECK(ab.top_mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ab.bottom_mean == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(ab.movers.front().first == 3);  // biggest improvement
  CHECK(ab.movers.front().second == doctest::Approx(0.3));

  EvalReport wrong;
  wrong.per_class_ap = {0.1};
  wrong.per_class_counts = {1};
  CHECK_THROWS_AS(per_class_delta_report(a, wrong, a.per_class_counts, 2), ValueError);
}

TEST_CASE("report kv round trip") {
  EvalReport r;
  r.per_class_ap = {0.123456, std::numeric_limits<double>::quiet_NaN(), 0.75};
  r.per_class_counts = {10, 0, 4};
  r.map = 0.436728;
  std::stringstream ss;
  write_report_kv(ss, r);
  EvalReport back = read_report_kv(ss);
  CHECK(back.map == doctest::Approx(r.map).epsilon(1e-9));
  CHECK(back.per_class_ap[0] == doctest::Approx(0.123456).epsilon(1e-9));
  CHECK(std::isnan(back.per_class_ap[1]));
  CHECK(back.per_class_counts == r.per_class_counts);
}

namespace {

ModelConfig tiny_eval_model(bool use_memory = false) {
  ModelConfig cfg;
  cfg.backbone.channels = {4, 8};
  cfg.backbone.spatial_strides = {2, 2};
  cfg.backbone.temporal_strides = {1, 1};
  cfg.roi_h = 3;
  cfg.roi_w = 3;
  cfg.sampling_ratio = 1;
  cfg.attn_heads = 2;
  cfg.head.type = HeadType::TOnly;
  cfg.head.use_memory = use_memory;
  return cfg;
}

SyntheticSpec tiny_eval_spec() {
  SyntheticSpec spec;
  spec.num_videos = 4;
  spec.clips_per_video = 2;
  spec.persons_min = 2;
  spec.persons_max = 2;
  spec.t = 2;
  spec.h = 16;
  spec.w = 16;
  spec.seed = 17;
  spec.val_fraction = 0.5;
  return spec;
}

}  // namespace

TEST_CASE("tta with one scale and no flip equals plain inference") {
  Dataset ds = gen_synthetic(tiny_eval_spec());
  Model model(tiny_eval_model(), 3);
  const ClipSample& clip = ds.clips[0];

  TtaOptions plain;
  plain.scales = {};
  plain.flip = false;
  auto scores = tta_infer(model, clip, plain, {});

  NoGradGuard ng;
  auto fwd = model.forward_clip(clip.frames, clip.boxes, {});
  Tensor expect = predict_scores(fwd.logits);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t k = 0; k < scores[i].size(); ++k) {
      CHECK(scores[i][k] == doctest::Approx(expect.at({i, k})).epsilon(1e-12));
    }
  }
}

TEST_CASE("tta averages variants; a flip-invariant input is a fixed point") {
  Dataset ds = gen_synthetic(tiny_eval_spec());
  Model model(tiny_eval_model(), 3);

  // Symmetric clip: flip maps it onto itself (constant frames, centered box).
  ClipSample clip;
  clip.video_id = "sym";
  clip.timestamp = 0;
  clip.frames = Tensor::full({3, 2, 16, 16}, 0.25);
  clip.boxes = {Box2D{0.25, 0.25, 0.75, 0.75}};
  clip.labels = {{0, 0, 0}};

  TtaOptions both;
  both.scales = {};
  both.flip = true;
  auto with_flip = tta_infer(model, clip, both, {});
  TtaOptions no_flip = both;
  no_flip.flip = false;
  auto without = tta_infer(model, clip, no_flip, {});
  for (std::size_t k = 0; k < with_flip[0].size(); ++k) {
    CHECK(with_flip[0][k] == doctest::Approx(without[0][k]).epsilon(1e-9));
  }

  // Hand-averaged two-variant check.
  const ClipSample& real = ds.clips[0];
  TtaOptions flip_only;
  flip_only.scales = {};
  flip_only.flip = true;
  auto avg = tta_infer(model, real, flip_only, {});
  auto a = tta_infer(model, real, no_flip, {});
  ClipSample flipped = hflip_clip(real);
  auto b = tta_infer(model, flipped, no_flip, {});
  for (std::size_t i = 0; i < avg.size(); ++i) {
    for (std::size_t k = 0; k < avg[i].size(); ++k) {
      CHECK(avg[i][k] == doctest::Approx(0.5 * (a[i][k] + b[i][k])).epsilon(1e-12));
    }
  }
}

TEST_CASE("multi-scale tta runs through the backbone at every scale") {
  Dataset ds = gen_synthetic(tiny_eval_spec());
  Model model(tiny_eval_model(), 3);
  TtaOptions tta;
  tta.scales = {12, 16, 20};
  tta.max_side = 64;
  tta.flip = true;
  auto scores = tta_infer(model, ds.clips[0], tta, {});
  REQUIRE(scores.size() == ds.clips[0].num_persons());
  for (const auto& row : scores) {
    for (double v : row) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("gt-box oracle scores at least as well as jittered boxes") {
  // The ordering is a property of trained checkpoints. Overfit a small model
  // and score on its own training split so the comparison is not drowned by
  // tiny-sample noise.
  SyntheticSpec spec = tiny_eval_spec();
  spec.num_videos = 8;
  spec.val_fraction = 0.25;
  Dataset ds = gen_synthetic(spec);
  Model model(tiny_eval_model(), 3);
  {
    TrainConfig cfg;
    cfg.total_iters = 150;
    cfg.warmup_iters = 4;
    cfg.batch_size = 2;
    cfg.seed = 12;
    auto stream = make_stream(ds, 'a', ds.noise_channel);
    BankPolicy banks;
    TrainLoopState st = TrainLoopState::fresh(cfg, "stage1");
    train_stage(model, stream, cfg, SamplerKind::Uniform, banks, st);
  }

  TtaOptions tta;
  tta.scales = {};
  tta.flip = false;

  EvalOutcome oracle = gt_box_mode(model, ds, Split::Train, nullptr, tta);

  // Strong jitter: the localization penalty dominates any scoring noise, so
  // the ordering holds even for this untrained model. The pinned 0.1
  // magnitude on trained checkpoints is the acceptance suite's job.
  InferOptions jit;
  jit.tta = tta;
  jit.boxes = BoxSource::Jittered;
  jit.jitter_magnitude = 0.25;
  jit.jitter_seed = 5;
  auto jittered = infer_dataset(model, ds, Split::Train, nullptr, jit);
  EvalReport jr = frame_map_50(jittered, gt_from_dataset(ds, Split::Train), ds.num_classes);

  CHECK(oracle.report.map >= jr.map - 1e-12);

  // Oracle scores == labels reach mAP 1 when boxes are ground truth.
  std::vector<DetectionResult> perfect;
  for (const GtBox& g : gt_from_dataset(ds, Split::Val)) {
    DetectionResult r;
    r.video_id = g.video_id;
    r.timestamp = g.timestamp;
    r.box = g.box;
    for (std::size_t k = 0; k < g.labels.size(); ++k) {
      r.scores.emplace_back(static_cast<int>(k), static_cast<double>(g.labels[k]));
    }
    perfect.push_back(std::move(r));
  }
  EvalReport pr = frame_map_50(perfect, gt_from_dataset(ds, Split::Val), ds.num_classes);
  CHECK(pr.map == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("worker pools do not change inference results") {
  Dataset ds = gen_synthetic(tiny_eval_spec());
  Model model(tiny_eval_model(), 3);
  InferOptions opts;
  opts.tta.scales = {};
  opts.tta.flip = true;
  opts.boxes = BoxSource::Jittered;
  opts.jitter_seed = 11;
  opts.workers = 1;
  auto serial = infer_dataset(model, ds, Split::Val, nullptr, opts);
  opts.workers = 4;
  auto parallel = infer_dataset(model, ds, Split::Val, nullptr, opts);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].video_id == parallel[i].video_id);
    CHECK(serial[i].box.x1 == parallel[i].box.x1);
    for (std::size_t k = 0; k < serial[i].scores.size(); ++k) {
      CHECK(serial[i].scores[k].second == parallel[i].scores[k].second);
    }
  }
}
