#pragma once

#include <map>
#include <string>
#include <vector>

#include "strel/data.hpp"
#include "strel/model.hpp"

namespace strel {

// Long-range person-feature store keyed by (video_id, timestamp). Entries are
// plain double vectors, so nothing read from the bank can ever join a
// gradient graph. Reads over a window never include the queried timestamp.
class MemoryBank {
 public:
  // Replaces any previous entry at (video_id, t).
  void write(const std::string& video_id, int t, std::vector<std::vector<double>> person_vectors);

  // Every stored vector with timestamp in [t - window, t + window], excluding
  // t itself, ordered by timestamp then person index.
  std::vector<std::vector<double>> read_window(const std::string& video_id, int t,
                                               int window) const;

  void clear() { entries_.clear(); }
  std::size_t num_entries() const;
  std::size_t num_vectors() const;

  // Snapshot directory: one file per video id.
  void save(const std::string& dir) const;
  static MemoryBank load(const std::string& dir);

  bool operator==(const MemoryBank& other) const { return entries_ == other.entries_; }

 private:
  std::map<std::string, std::map<int, std::vector<std::vector<double>>>> entries_;
};

// One inference pass over every clip (annotated or not), storing pooled
// pre-fusion person vectors. Deterministic given model and clips.
void extract_and_store_all(MemoryBank& bank, const Model& model,
                           const std::vector<const ClipSample*>& clips);

}  // namespace strel
