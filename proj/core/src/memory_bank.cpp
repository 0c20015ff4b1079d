#include "strel/memory_bank.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "strel/error.hpp"

namespace fs = std::filesystem;

namespace strel {

void MemoryBank::write(const std::string& video_id, int t,
                       std::vector<std::vector<double>> person_vectors) {
  entries_[video_id][t] = std::move(person_vectors);
}

std::vector<std::vector<double>> MemoryBank::read_window(const std::string& video_id, int t,
                                                         int window) const {
  if (window < 0) throw ValueError("read_window: window must be >= 0");
  std::vector<std::vector<double>> out;
  auto vit = entries_.find(video_id);
  if (vit == entries_.end()) return out;
  auto lo = vit->second.lower_bound(t - window);
  auto hi = vit->second.upper_bound(t + window);
  for (auto it = lo; it != hi; ++it) {
    if (it->first == t) continue;  // self-exclusion
    for (const auto& v : it->second) out.push_back(v);
  }
  return out;
}

std::size_t MemoryBank::num_entries() const {
  std::size_t n = 0;
  for (const auto& [vid, by_t] : entries_) n += by_t.size();
  return n;
}

std::size_t MemoryBank::num_vectors() const {
  std::size_t n = 0;
  for (const auto& [vid, by_t] : entries_) {
    for (const auto& [t, vecs] : by_t) n += vecs.size();
  }
  return n;
}

namespace {

constexpr const char* kMagic = "strel-bank";
constexpr const char* kVersion = "v1";

std::string sanitize_id(const std::string& id) {
  std::string out;
  char buf[8];
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '-' || c == '_') {
      out.push_back(static_cast<char>(c));
    } else {
      std::snprintf(buf, sizeof(buf), "%%%02X", c);
      out += buf;
    }
  }
  return out;
}

std::string hexd(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

}  // namespace

void MemoryBank::save(const std::string& dir) const {
  fs::create_directories(dir);
  // Wipe stale video files so the snapshot equals the in-memory bank.
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".bank") fs::remove(e.path());
  }
  for (const auto& [vid, by_t] : entries_) {
    fs::path file = fs::path(dir) / (sanitize_id(vid) + ".bank");
    std::ofstream os(file);
    if (!os) throw IoError(msg("MemoryBank::save: cannot write '", file.string(), "'"));
    os << kMagic << ' ' << kVersion << ' ' << vid << '\n';
    for (const auto& [t, vecs] : by_t) {
      const std::size_t dim = vecs.empty() ? 0 : vecs[0].size();
      os << "t " << t << ' ' << vecs.size() << ' ' << dim << '\n';
      for (const auto& v : vecs) {
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << hexd(v[i]);
        os << '\n';
      }
    }
  }
}

MemoryBank MemoryBank::load(const std::string& dir) {
  MemoryBank bank;
  if (!fs::exists(dir)) throw IoError(msg("MemoryBank::load: no such directory '", dir, "'"));
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".bank") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& file : files) {
    std::ifstream is(file);
    if (!is) throw IoError(msg("MemoryBank::load: cannot open '", file.string(), "'"));
    std::string magic, version, vid;
    is >> magic >> version >> vid;
    if (magic != kMagic || version != kVersion) {
      throw ParseError(msg("MemoryBank::load: bad header in '", file.string(), "'"));
    }
    std::string tok;
    while (is >> tok) {
      if (tok != "t") throw ParseError(msg("MemoryBank::load: unexpected token '", tok, "'"));
      int t = 0;
      std::size_t count = 0, dim = 0;
      is >> t >> count >> dim;
      is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
      std::vector<std::vector<double>> vecs;
      vecs.reserve(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::string line;
        if (!std::getline(is, line)) {
          throw ParseError(msg("MemoryBank::load: truncated '", file.string(), "'"));
        }
        std::istringstream ls(line);
        std::vector<double> v;
        v.reserve(dim);
        std::string vt;
        while (ls >> vt) v.push_back(std::strtod(vt.c_str(), nullptr));
        if (v.size() != dim) {
          throw ParseError(msg("MemoryBank::load: vector dim mismatch in '", file.string(), "'"));
        }
        vecs.push_back(std::move(v));
      }
      bank.entries_[vid][t] = std::move(vecs);
    }
  }
  return bank;
}

void extract_and_store_all(MemoryBank& bank, const Model& model,
                           const std::vector<const ClipSample*>& clips) {
  for (const ClipSample* clip : clips) {
    bank.write(clip->video_id, clip->timestamp, model.pooled_vectors(clip->frames, clip->boxes));
  }
}

}  // namespace strel
