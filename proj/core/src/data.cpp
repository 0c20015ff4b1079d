#include "strel/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "strel/checkpoint.hpp"
#include "strel/error.hpp"

namespace fs = std::filesystem;

namespace strel {

void Box2D::validate() const {
  if (!(x1 >= 0.0 && x1 < x2 && x2 <= 1.0 && y1 >= 0.0 && y1 < y2 && y2 <= 1.0)) {
    throw ValueError(msg("Box2D: invalid box (", x1, ",", y1, ",", x2, ",", y2, ")"));
  }
}

std::vector<const ClipSample*> Dataset::select(Split split, bool annotated_only) const {
  std::vector<const ClipSample*> out;
  for (const ClipSample& c : clips) {
    if (c.split != split) continue;
    if (annotated_only && !c.annotated) continue;
    out.push_back(&c);
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (num_videos < 1 || clips_per_video < 1) throw ConfigError("SyntheticSpec: need at least one video and clip");
  if (persons_min < 1 || persons_max < persons_min) {
    throw ConfigError("SyntheticSpec: invalid persons range");
  }
  if (t < 1 || h < 4 || w < 4) throw ConfigError("SyntheticSpec: frame extents too small");
  if (c != 3) throw ConfigError("SyntheticSpec: generator renders exactly 3 channels");
  if (q < 2) throw ConfigError("SyntheticSpec: need at least two signature buckets");
  if (persist_prob < 0.0 || persist_prob > 1.0) throw ConfigError("SyntheticSpec: persist_prob out of [0,1]");
  if (upper_half_prob < 0.0 || upper_half_prob > 1.0) {
    throw ConfigError("SyntheticSpec: upper_half_prob out of [0,1]");
  }
  if (label_window != 0 && label_window != 1) throw ConfigError("SyntheticSpec: label_window must be 0 or 1");
  if (signature_channel != 0 && signature_channel != 2) {
    throw ConfigError("SyntheticSpec: signature_channel must be 0 or 2 (channel 1 is the time code)");
  }
  if (noise_amplitude < 0.0 || noise_amplitude > 1.0) {
    throw ConfigError("SyntheticSpec: noise_amplitude out of [0,1]");
  }
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("SyntheticSpec: val_fraction out of [0,1)");
  // Every person needs its own grid cell of a workable pixel size.
  const int g = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(persons_max))));
  if (std::min(h, w) / g < 8) {
    throw ConfigError(msg("SyntheticSpec: infeasible placement, ", persons_max,
                          " persons need a ", g, "x", g, " grid but frames are only ", h, "x", w));
  }
}

namespace {

bool is_bright(int sig, int q) { return 2 * sig >= q; }

int draw_signature(const SyntheticSpec& spec, Rng& rng) {
  // Lower half: 2s < q. Upper half: 2s >= q.
  const int first_upper = (spec.q + 1) / 2;
  if (rng.uniform() < spec.upper_half_prob) {
    return static_cast<int>(rng.uniform_int(first_upper, spec.q - 1));
  }
  return static_cast<int>(rng.uniform_int(0, first_upper - 1));
}

int evolve_signature(const SyntheticSpec& spec, int prev, Rng& rng) {
  if (rng.uniform() < spec.persist_prob) return prev;
  // Redraw from the base distribution conditioned on changing.
  for (;;) {
    const int s = draw_signature(spec, rng);
    if (s != prev) return s;
  }
}

std::string make_video_id(const SyntheticSpec& spec, int v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04d", spec.id_prefix.c_str(), v);
  return buf;
}

}  // namespace

Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng = Rng::substream(spec.seed, "synthetic");

  Dataset ds;
  ds.num_classes = SyntheticSpec::kNumClasses;
  const int n_val = static_cast<int>(std::lround(spec.num_videos * spec.val_fraction));
  const int noise_channel = spec.signature_channel == 0 ? 2 : 0;
  ds.noise_channel = noise_channel;

  for (int v = 0; v < spec.num_videos; ++v) {
    const std::string video_id = make_video_id(spec, v);
    const Split split = v >= spec.num_videos - n_val ? Split::Val : Split::Train;
    const int n = static_cast<int>(rng.uniform_int(spec.persons_min, spec.persons_max));
    const int annotated_t = spec.clips_per_video / 2;

    // Signature timeline first: windowed labels need neighbors resolved.
    std::vector<std::vector<int>> sig(spec.clips_per_video, std::vector<int>(n));
    for (int p = 0; p < n; ++p) sig[0][p] = draw_signature(spec, rng);
    for (int tau = 1; tau < spec.clips_per_video; ++tau) {
      for (int p = 0; p < n; ++p) sig[tau][p] = evolve_signature(spec, sig[tau - 1][p], rng);
    }

    const int g = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));

    for (int tau = 0; tau < spec.clips_per_video; ++tau) {
      ClipSample clip;
      clip.video_id = video_id;
      clip.timestamp = tau;
      clip.split = split;
      clip.annotated = !spec.annotate_single || tau == annotated_t;
      clip.signatures = sig[tau];

      // Non-overlapping boxes on a jittered grid: one distinct cell per person.
      std::vector<int> cells(static_cast<std::size_t>(g) * g);
      for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
      rng.shuffle(cells);
      const double cell = 1.0 / g;
      for (int p = 0; p < n; ++p) {
        const int cy = cells[p] / g, cx = cells[p] % g;
        const double bw = rng.uniform(0.5, 0.8) * cell;
        const double bh = rng.uniform(0.5, 0.8) * cell;
        Box2D box;
        box.x1 = cx * cell + rng.uniform(0.0, cell - bw);
        box.y1 = cy * cell + rng.uniform(0.0, cell - bh);
        box.x2 = box.x1 + bw;
        box.y2 = box.y1 + bh;
        box.x1 = std::clamp(box.x1, 0.0, 1.0);
        box.y1 = std::clamp(box.y1, 0.0, 1.0);
        box.x2 = std::clamp(box.x2, 0.0, 1.0);
        box.y2 = std::clamp(box.y2, 0.0, 1.0);
        box.validate();
        clip.boxes.push_back(box);
      }

      // Labels are exact functions of the signature timeline.
      for (int p = 0; p < n; ++p) {
        std::vector<int> lab(SyntheticSpec::kNumClasses, 0);
        const int s = sig[tau][p];
        if (spec.label_window == 0) {
          for (int j = 0; j < n; ++j) {
            if (j != p && sig[tau][j] == s) lab[0] = 1;
          }
        } else {
          for (int dt : {-1, +1}) {
            const int nb = tau + dt;
            if (nb < 0 || nb >= spec.clips_per_video) continue;
            for (int j = 0; j < n; ++j) {
              if (sig[nb][j] == s) lab[0] = 1;
            }
          }
        }
        bool strictly_max = true;
        for (int j = 0; j < n; ++j) {
          if (j != p && sig[tau][j] >= s) strictly_max = false;
        }
        lab[1] = strictly_max ? 1 : 0;
        lab[2] = is_bright(s, spec.q) ? 1 : 0;
        clip.labels.push_back(std::move(lab));
      }

      // Render. Channel layout: signature patches on signature_channel, frame
      // index code on channel 1, uniform noise on the remaining channel.
      Tensor frames = Tensor::zeros(
          {static_cast<std::size_t>(spec.c), static_cast<std::size_t>(spec.t),
           static_cast<std::size_t>(spec.h), static_cast<std::size_t>(spec.w)});
      auto fr = frames.data();
      const std::size_t plane = static_cast<std::size_t>(spec.h) * spec.w;
      const std::size_t chan = static_cast<std::size_t>(spec.t) * plane;
      for (int tt = 0; tt < spec.t; ++tt) {
        const double tcode = spec.t > 1 ? static_cast<double>(tt) / (spec.t - 1) : 0.0;
        for (int y = 0; y < spec.h; ++y) {
          for (int x = 0; x < spec.w; ++x) {
            const std::size_t off = tt * plane + y * static_cast<std::size_t>(spec.w) + x;
            fr[1 * chan + off] = tcode;
            fr[noise_channel * chan + off] = rng.uniform() * spec.noise_amplitude;
          }
        }
      }
      for (int p = 0; p < n; ++p) {
        const Box2D& b = clip.boxes[p];
        const double intensity = static_cast<double>(sig[tau][p]) / (spec.q - 1);
        for (int y = 0; y < spec.h; ++y) {
          const double cyn = (y + 0.5) / spec.h;
          if (cyn < b.y1 || cyn > b.y2) continue;
          for (int x = 0; x < spec.w; ++x) {
            const double cxn = (x + 0.5) / spec.w;
            if (cxn < b.x1 || cxn > b.x2) continue;
            for (int tt = 0; tt < spec.t; ++tt) {
              fr[spec.signature_channel * chan + tt * plane +
                 y * static_cast<std::size_t>(spec.w) + x] = intensity;
            }
          }
        }
      }
      clip.frames = frames;
      ds.clips.push_back(std::move(clip));
    }
  }
  return ds;
}

namespace {

constexpr const char* kManifestMagic = "strel-manifest";
constexpr const char* kManifestVersion = "v1";

std::string hexd(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_double_tok(const std::string& tok, const char* what) {
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str()) throw ParseError(msg("manifest: bad ", what, " token '", tok, "'"));
  return v;
}

std::string clip_file_name(const ClipSample& clip) {
  return msg("clips/", clip.video_id, "_", clip.timestamp, ".tsr");
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir, bool force) {
  fs::path root(dir);
  if (fs::exists(root) && !fs::is_empty(root) && !force) {
    throw IoError(msg("save_dataset: '", dir, "' exists and is not empty (use force)"));
  }
  fs::create_directories(root / "clips");

  std::ofstream mf(root / "manifest.txt");
  if (!mf) throw IoError(msg("save_dataset: cannot write manifest in '", dir, "'"));
  mf << kManifestMagic << ' ' << kManifestVersion << ' ' << ds.num_classes << ' '
     << ds.noise_channel << '\n';
  for (const ClipSample& clip : ds.clips) {
    if (clip.video_id.find_first_of(" \t\n") != std::string::npos) {
      throw ValueError(msg("save_dataset: video id '", clip.video_id, "' contains whitespace"));
    }
    mf << clip.video_id << ' ' << clip.timestamp << ' '
       << (clip.split == Split::Train ? "train" : "val") << ' ' << (clip.annotated ? 1 : 0) << ' '
       << clip.num_persons() << ' ' << ds.num_classes << ' ' << clip_file_name(clip);
    for (std::size_t p = 0; p < clip.num_persons(); ++p) {
      const Box2D& b = clip.boxes[p];
      mf << ' ' << hexd(b.x1) << ' ' << hexd(b.y1) << ' ' << hexd(b.x2) << ' ' << hexd(b.y2);
      for (int k : clip.labels[p]) mf << ' ' << k;
      mf << ' ' << (p < clip.signatures.size() ? clip.signatures[p] : -1);
    }
    mf << '\n';

    std::ofstream tf(root / clip_file_name(clip));
    if (!tf) throw IoError(msg("save_dataset: cannot write '", clip_file_name(clip), "'"));
    write_tensor_values(tf, clip.frames);
  }
}

Dataset load_dataset(const std::string& dir) {
  fs::path root(dir);
  std::ifstream mf(root / "manifest.txt");
  if (!mf) throw IoError(msg("load_dataset: cannot open manifest in '", dir, "'"));
  std::string magic, version;
  int num_classes = 0;
  int noise_channel = 2;
  mf >> magic >> version >> num_classes >> noise_channel;
  if (magic != kManifestMagic || version != kManifestVersion) {
    throw ParseError(msg("load_dataset: unrecognized manifest header in '", dir, "'"));
  }
  mf.ignore(std::numeric_limits<std::streamsize>::max(), '\n');

  Dataset ds;
  ds.num_classes = num_classes;
  ds.noise_channel = noise_channel;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(mf, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ClipSample clip;
    std::string split_tok, file_tok;
    int annotated = 0;
    std::size_t n_persons = 0;
    int k = 0;
    if (!(ls >> clip.video_id >> clip.timestamp >> split_tok >> annotated >> n_persons >> k >>
          file_tok)) {
      throw ParseError(msg("load_dataset: malformed record at manifest line ", line_no));
    }
    if (split_tok == "train") {
      clip.split = Split::Train;
    } else if (split_tok == "val") {
      clip.split = Split::Val;
    } else {
      throw ParseError(msg("load_dataset: unknown split '", split_tok, "' at line ", line_no));
    }
    if (k != num_classes) {
      throw ParseError(msg("load_dataset: class count mismatch at line ", line_no));
    }
    clip.annotated = annotated != 0;
    for (std::size_t p = 0; p < n_persons; ++p) {
      std::string t1, t2, t3, t4;
      if (!(ls >> t1 >> t2 >> t3 >> t4)) {
        throw ParseError(msg("load_dataset: truncated box at line ", line_no));
      }
      Box2D box{parse_double_tok(t1, "x1"), parse_double_tok(t2, "y1"),
                parse_double_tok(t3, "x2"), parse_double_tok(t4, "y2")};
      box.validate();
      clip.boxes.push_back(box);
      std::vector<int> lab(num_classes, 0);
      for (int& bit : lab) {
        if (!(ls >> bit)) throw ParseError(msg("load_dataset: truncated labels at line ", line_no));
        if (bit != 0 && bit != 1) {
          throw ValueError(msg("load_dataset: label not 0/1 at line ", line_no));
        }
      }
      clip.labels.push_back(std::move(lab));
      int s = -1;
      if (!(ls >> s)) throw ParseError(msg("load_dataset: truncated signature at line ", line_no));
      clip.signatures.push_back(s);
    }

    std::ifstream tf(root / file_tok);
    if (!tf) throw IoError(msg("load_dataset: missing clip file '", file_tok, "'"));
    clip.frames = read_tensor_values(tf);
    if (clip.frames.ndim() != 4) {
      throw ParseError(msg("load_dataset: clip '", file_tok, "' is not a 4-d tensor"));
    }
    ds.clips.push_back(std::move(clip));
  }
  return ds;
}

DatasetSummary summarize(const Dataset& ds) {
  DatasetSummary s;
  s.clips = ds.clips.size();
  s.label_counts.assign(static_cast<std::size_t>(ds.num_classes), 0);
  for (const ClipSample& c : ds.clips) {
    s.persons += c.num_persons();
    for (const auto& lab : c.labels) {
      for (std::size_t k = 0; k < lab.size(); ++k) {
        if (lab[k]) ++s.label_counts[k];
      }
    }
  }
  return s;
}

}  // namespace strel
