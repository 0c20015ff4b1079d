#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "strel/params.hpp"
#include "strel/tensor.hpp"

namespace strel {

// Optimizer / loop state carried inside a checkpoint so an interrupted run can
// resume bit-exactly.
struct TrainState {
  long iter = 0;
  std::map<std::string, std::vector<double>> velocities;
  std::map<std::string, std::string> rng_states;  // substream name -> serialized engine
};

// Tensor value encoding shared by checkpoints, dataset clip files and memory
// bank snapshots: a shape line followed by one line of hexfloat values.
// Hexfloat round-trips doubles exactly.
void write_tensor_values(std::ostream& os, const Tensor& t);
Tensor read_tensor_values(std::istream& is);

// Checkpoint file: version tag, then `param` / `buffer` records ordered by
// name, then optional train state.
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const TrainState* state = nullptr);

struct LoadedCheckpoint {
  std::optional<TrainState> state;
};

// Loads values into an existing store; every name and shape must match.
LoadedCheckpoint load_checkpoint(const std::string& path, ParamStore& store);

// Raw listing (name -> values) without needing a model; used by diff tooling
// and tests.
std::map<std::string, std::vector<double>> read_checkpoint_raw(const std::string& path);

}  // namespace strel
